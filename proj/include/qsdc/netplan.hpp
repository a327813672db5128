#pragma once

// DWDM/TDM wavelength planning for k subnets of m users.
//
// Each unordered subnet pair gets its own correlated channel pair n/-n, and
// each subnet gets one more pair whose photons a 1xm splitter distributes to
// its members in distinct delay slots.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsdc/errors.hpp"

namespace qsdc::netplan {

enum class Side : std::uint8_t { Signal, Idler };

// Number of correlated pairs on the default 100 GHz grid (CH17..CH31 / CH33..CH47).
inline constexpr int kDefaultGridPairs = 15;
inline constexpr int kMaxGridPairs = 30;

struct UserId {
    int subnet = 0;
    int member = 0;

    auto operator<=>(const UserId&) const = default;
};

struct ChannelPair {
    int index = 0;
    std::string signal_itu;
    std::string idler_itu;

    bool operator==(const ChannelPair&) const = default;
};

struct IntraLink {
    ChannelPair pair;
    std::vector<int> tdm_slots;  // member -> delay slot

    bool operator==(const IntraLink&) const = default;
};

struct WavelengthPlan {
    int subnets = 0;
    int users_per_subnet = 0;
    int grid_pairs = kDefaultGridPairs;
    std::map<std::pair<int, int>, ChannelPair> inter_links;  // key: (a, b) with a < b
    std::map<int, IntraLink> intra_links;
    int total_channels = 0;

    bool operator==(const WavelengthPlan&) const = default;
};

inline std::string capacity_message(int needed, int available) {
    return "wavelength grid exhausted: " + std::to_string(needed) + " channel pairs needed but only " +
           std::to_string(available) +
           " available; increase ITU international wavelength channels or utilize narrower-band DWDMs";
}

// Default grid: signal CH(16+n), idler CH(32+n). A grid of G pairs keeps the
// idler rule and places signals at CH(31-G+n), which is the default at G=15.
inline std::string itu_name(int pair_index, Side side, int grid_pairs = kDefaultGridPairs) {
    if (grid_pairs < 1 || grid_pairs > kMaxGridPairs) {
        throw CapacityExceeded("grid size " + std::to_string(grid_pairs) + " outside 1.." +
                               std::to_string(kMaxGridPairs));
    }
    if (pair_index < 1 || pair_index > grid_pairs) {
        throw CapacityExceeded("channel pair " + std::to_string(pair_index) + " outside grid 1.." +
                               std::to_string(grid_pairs));
    }
    const int signal_base = grid_pairs == kDefaultGridPairs ? 16 : 31 - grid_pairs;
    const int channel = side == Side::Signal ? signal_base + pair_index : 32 + pair_index;
    return "CH" + std::to_string(channel);
}

inline ChannelPair make_pair(int index, int grid_pairs) {
    return ChannelPair{index, itu_name(index, Side::Signal, grid_pairs), itu_name(index, Side::Idler, grid_pairs)};
}

constexpr int pairs_required(int subnets) { return subnets * (subnets - 1) / 2 + subnets; }

// Independent of m: one splitter-fed pair per subnet.
constexpr int channels_required(int subnets, int /*users_per_subnet*/ = 1) { return 2 * pairs_required(subnets); }

inline WavelengthPlan build_plan(int subnets, int users_per_subnet, int grid_pairs = kDefaultGridPairs) {
    if (subnets < 1) throw DomainError("subnet count must be >= 1");
    if (users_per_subnet < 1) throw DomainError("users per subnet must be >= 1");
    if (grid_pairs < 1 || grid_pairs > kMaxGridPairs) {
        throw DomainError("grid size must lie in 1.." + std::to_string(kMaxGridPairs));
    }
    const int needed = pairs_required(subnets);
    if (needed > grid_pairs) throw CapacityExceeded(capacity_message(needed, grid_pairs));

    WavelengthPlan plan;
    plan.subnets = subnets;
    plan.users_per_subnet = users_per_subnet;
    plan.grid_pairs = grid_pairs;
    int next = 1;
    for (int a = 0; a < subnets; ++a) {
        for (int b = a + 1; b < subnets; ++b) plan.inter_links.emplace(std::pair{a, b}, make_pair(next++, grid_pairs));
    }
    for (int s = 0; s < subnets; ++s) {
        IntraLink link{make_pair(next++, grid_pairs), {}};
        link.tdm_slots.reserve(static_cast<std::size_t>(users_per_subnet));
        for (int member = 0; member < users_per_subnet; ++member) link.tdm_slots.push_back(member);
        plan.intra_links.emplace(s, std::move(link));
    }
    plan.total_channels = 2 * (next - 1);
    return plan;
}

enum class LinkKind : std::uint8_t { Intra, Inter };

struct PairResource {
    UserId a;
    UserId b;
    LinkKind kind = LinkKind::Inter;
    ChannelPair pair;
    int slot_a = -1;  // TDM slots, intra links only
    int slot_b = -1;
};

struct ConnectivityReport {
    std::size_t total_pairs = 0;
    std::vector<PairResource> covered;
    std::vector<std::pair<UserId, UserId>> uncovered;
    bool is_fully_connected = false;
};

// Resource connecting two distinct users, if any.
inline std::optional<PairResource> resource_for(const WavelengthPlan& plan, UserId a, UserId b) {
    if (b < a) std::swap(a, b);
    if (a.subnet == b.subnet) {
        const auto it = plan.intra_links.find(a.subnet);
        if (it == plan.intra_links.end()) return std::nullopt;
        const auto& slots = it->second.tdm_slots;
        const auto ma = static_cast<std::size_t>(a.member);
        const auto mb = static_cast<std::size_t>(b.member);
        if (ma >= slots.size() || mb >= slots.size() || slots[ma] == slots[mb]) return std::nullopt;
        return PairResource{a, b, LinkKind::Intra, it->second.pair, slots[ma], slots[mb]};
    }
    const auto it = plan.inter_links.find({a.subnet, b.subnet});
    if (it == plan.inter_links.end()) return std::nullopt;
    return PairResource{a, b, LinkKind::Inter, it->second, -1, -1};
}

inline ConnectivityReport verify_full_connectivity(const WavelengthPlan& plan, int subnets, int users_per_subnet) {
    ConnectivityReport report;
    std::vector<UserId> users;
    for (int s = 0; s < subnets; ++s) {
        for (int m = 0; m < users_per_subnet; ++m) users.push_back({s, m});
    }
    for (std::size_t i = 0; i < users.size(); ++i) {
        for (std::size_t j = i + 1; j < users.size(); ++j) {
            ++report.total_pairs;
            if (auto r = resource_for(plan, users[i], users[j])) {
                report.covered.push_back(*r);
            } else {
                report.uncovered.emplace_back(users[i], users[j]);
            }
        }
    }
    report.is_fully_connected = report.uncovered.empty();
    return report;
}

inline std::set<std::string> distinct_channels(const WavelengthPlan& plan) {
    std::set<std::string> out;
    for (const auto& [key, pair] : plan.inter_links) {
        out.insert(pair.signal_itu);
        out.insert(pair.idler_itu);
    }
    for (const auto& [subnet, link] : plan.intra_links) {
        out.insert(link.pair.signal_itu);
        out.insert(link.pair.idler_itu);
    }
    return out;
}

inline nlohmann::ordered_json to_json(const ChannelPair& p) {
    return {{"index", p.index}, {"signal", p.signal_itu}, {"idler", p.idler_itu}};
}

inline std::string subnet_name(int subnet) {
    if (subnet < 26) return std::string(1, static_cast<char>('A' + subnet));
    return "S" + std::to_string(subnet);
}

inline std::string user_name(UserId u) { return subnet_name(u.subnet) + std::to_string(u.member + 1); }

inline nlohmann::ordered_json to_json(const WavelengthPlan& plan) {
    nlohmann::ordered_json doc;
    doc["subnets"] = plan.subnets;
    doc["users_per_subnet"] = plan.users_per_subnet;
    doc["grid_pairs"] = plan.grid_pairs;
    doc["total_channels"] = plan.total_channels;
    auto inter = nlohmann::ordered_json::array();
    for (const auto& [key, pair] : plan.inter_links) {
        inter.push_back({{"subnets", {subnet_name(key.first), subnet_name(key.second)}}, {"pair", to_json(pair)}});
    }
    doc["inter_links"] = std::move(inter);
    auto intra = nlohmann::ordered_json::array();
    for (const auto& [subnet, link] : plan.intra_links) {
        intra.push_back({{"subnet", subnet_name(subnet)}, {"pair", to_json(link.pair)}, {"tdm_slots", link.tdm_slots}});
    }
    doc["intra_links"] = std::move(intra);
    return doc;
}

inline nlohmann::ordered_json to_json(const ConnectivityReport& report) {
    nlohmann::ordered_json doc;
    doc["total_pairs"] = report.total_pairs;
    doc["covered_pairs"] = report.covered.size();
    doc["is_fully_connected"] = report.is_fully_connected;
    auto missing = nlohmann::ordered_json::array();
    for (const auto& [a, b] : report.uncovered) missing.push_back({user_name(a), user_name(b)});
    doc["uncovered"] = std::move(missing);
    return doc;
}

}  // namespace qsdc::netplan

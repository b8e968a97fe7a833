#include "tpool/profiler.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace tpool {

namespace {

std::string first_two_segments(const std::string& name) {
    std::size_t first = name.find('.');
    if (first == std::string::npos) return name;
    std::size_t second = name.find('.', first + 1);
    return second == std::string::npos ? name : name.substr(0, second);
}

std::uint64_t value_of(const ParamEntry& e) { return e.count; }
std::uint64_t value_of(const FlopEntry& e) { return e.flops; }

template <class Entry>
std::uint64_t sum_matching(const std::vector<Entry>& entries, const std::string& prefix) {
    std::uint64_t n = 0;
    for (const auto& e : entries)
        if (e.component.rfind(prefix, 0) == 0) n += value_of(e);
    return n;
}

}  // namespace

ParamReport detail::group_params(
    const std::vector<std::pair<std::string, std::uint64_t>>& leaves) {
    ParamReport report;
    for (const auto& [name, count] : leaves) {
        const std::string component = first_two_segments(name);
        auto it = std::find_if(report.components.begin(), report.components.end(),
                               [&](const ParamEntry& e) { return e.component == component; });
        if (it == report.components.end())
            report.components.push_back({component, count});
        else
            it->count += count;
        report.total += count;
    }
    return report;
}

std::uint64_t ParamReport::total_matching(const std::string& prefix) const {
    return sum_matching(components, prefix);
}

std::uint64_t FlopReport::total_matching(const std::string& prefix) const {
    return sum_matching(components, prefix);
}

void FlopCounter::add(const std::string& component, std::uint64_t flops) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const FlopEntry& e) { return e.component == component; });
    if (it == entries_.end())
        entries_.push_back({component, flops});
    else
        it->flops += flops;
}

FlopReport FlopCounter::report(std::string geometry) const {
    FlopReport r;
    r.components = entries_;
    r.geometry = std::move(geometry);
    for (const auto& e : entries_) r.total += e.flops;
    return r;
}

namespace {

std::size_t widest_component(const std::vector<std::string>& names) {
    std::size_t w = std::string("component").size();
    for (const auto& n : names) w = std::max(w, n.size());
    return w;
}

}  // namespace

std::string ParamReport::to_text() const {
    std::vector<std::string> names;
    for (const auto& e : components) names.push_back(e.component);
    const std::size_t w = widest_component(names);
    std::ostringstream os;
    os << std::left << std::setw(int(w)) << "component" << "  " << std::right
       << std::setw(14) << "params" << "\n";
    for (const auto& e : components)
        os << std::left << std::setw(int(w)) << e.component << "  " << std::right
           << std::setw(14) << e.count << "\n";
    os << std::left << std::setw(int(w)) << "total" << "  " << std::right << std::setw(14)
       << total << "\n";
    return os.str();
}

std::string FlopReport::to_text() const {
    std::vector<std::string> names;
    for (const auto& e : components) names.push_back(e.component);
    const std::size_t w = widest_component(names);
    std::ostringstream os;
    os << "flops for one forward pass at " << geometry << " (1 MAC = 2 FLOPs)\n";
    os << std::left << std::setw(int(w)) << "component" << "  " << std::right
       << std::setw(16) << "flops" << "\n";
    for (const auto& e : components)
        os << std::left << std::setw(int(w)) << e.component << "  " << std::right
           << std::setw(16) << e.flops << "\n";
    os << std::left << std::setw(int(w)) << "total" << "  " << std::right << std::setw(16)
       << total << "\n";
    return os.str();
}

namespace {

// union of both component lists, param order first
std::vector<std::string> merged_components(const ParamReport& params, const FlopReport& flops) {
    std::vector<std::string> names;
    auto push_unique = [&](const std::string& n) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    };
    for (const auto& e : params.components) push_unique(e.component);
    for (const auto& e : flops.components) push_unique(e.component);
    return names;
}

std::uint64_t lookup_params(const ParamReport& r, const std::string& name) {
    for (const auto& e : r.components)
        if (e.component == name) return e.count;
    return 0;
}

std::uint64_t lookup_flops(const FlopReport& r, const std::string& name) {
    for (const auto& e : r.components)
        if (e.component == name) return e.flops;
    return 0;
}

}  // namespace

std::string profile_csv(const ParamReport& params, const FlopReport& flops) {
    std::ostringstream os;
    os << "component,params,flops\n";
    for (const auto& name : merged_components(params, flops))
        os << name << "," << lookup_params(params, name) << "," << lookup_flops(flops, name)
           << "\n";
    os << "total," << params.total << "," << flops.total << "\n";
    return os.str();
}

std::string profile_text(const ParamReport& params, const FlopReport& flops) {
    const auto names = merged_components(params, flops);
    std::size_t w = std::string("component").size();
    for (const auto& n : names) w = std::max(w, n.size());
    std::ostringstream os;
    os << "flops for one forward pass at " << flops.geometry << " (1 MAC = 2 FLOPs)\n";
    os << std::left << std::setw(int(w)) << "component" << "  " << std::right << std::setw(14)
       << "params" << "  " << std::setw(16) << "flops" << "\n";
    for (const auto& name : names)
        os << std::left << std::setw(int(w)) << name << "  " << std::right << std::setw(14)
           << lookup_params(params, name) << "  " << std::setw(16) << lookup_flops(flops, name)
           << "\n";
    os << std::left << std::setw(int(w)) << "total" << "  " << std::right << std::setw(14)
       << params.total << "  " << std::setw(16) << flops.total << "\n";
    return os.str();
}

}  // namespace tpool

#include <cstdio>
#include <fstream>

#include "tpool/optim.hpp"

namespace tpool {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const MetricHistory& history) {
    std::string out = "epoch,split,loss,top1,lr\n";
    for (const EpochRow& row : history) {
        out += std::to_string(row.epoch);
        out += ',';
        out += row.split;
        out += ',';
        out += fmt(row.loss);
        out += ',';
        out += fmt(row.top1);
        out += ',';
        out += fmt(row.lr);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const MetricHistory& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << metrics_csv(history);
    if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace tpool

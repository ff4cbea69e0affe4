#include "mirage/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mirage::report {
namespace {

void emit(const json& v, std::ostringstream& out, int depth) {
    const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
    switch (v.type()) {
        case json::value_t::object: {
            if (v.empty()) {
                out << "{}";
                return;
            }
            out << "{\n";
            std::size_t i = 0;
            for (const auto& [key, child] : v.items()) {  // std::map storage: already sorted
                out << pad << json(key).dump() << ": ";
                emit(child, out, depth + 1);
                out << (++i < v.size() ? ",\n" : "\n");
            }
            out << close_pad << "}";
            return;
        }
        case json::value_t::array: {
            if (v.empty()) {
                out << "[]";
                return;
            }
            out << "[\n";
            for (std::size_t i = 0; i < v.size(); ++i) {
                out << pad;
                emit(v[i], out, depth + 1);
                out << (i + 1 < v.size() ? ",\n" : "\n");
            }
            out << close_pad << "]";
            return;
        }
        case json::value_t::number_float: {
            const double d = v.get<double>();
            if (!std::isfinite(d)) throw std::domain_error("report: non-finite number");
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", d);
            out << (std::string(buf) == "-0.000000" ? "0.000000" : buf);
            return;
        }
        default: out << v.dump();
    }
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string fixed(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Columns padded to the widest cell.
std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c) width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    std::ostringstream out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            const std::string& cell = rows[i][c];
            if (c == 0)
                line += cell + std::string(width[c] - cell.size(), ' ');
            else
                line += "  " + std::string(width[c] - cell.size(), ' ') + cell;
        }
        out << line << "\n";
        if (i == 0) out << std::string(line.size(), '-') << "\n";
    }
    return out.str();
}

}  // namespace

std::string format_json(const json& doc) {
    std::ostringstream out;
    emit(doc, out, 0);
    out << "\n";
    return out.str();
}

json config_json(const config::RunConfig& config) { return json::parse(config::serialize_config(config)); }

json diagnostics_json(const eval::Diagnostics& d) {
    return {{"v_clip", d.v_clip}, {"separation", d.separation}, {"holdout_ce", d.holdout_ce}, {"holdout_accuracy", d.holdout_accuracy}};
}

json train_log_json(const eval::TrainLog& log) {
    json epochs = json::array();
    for (const auto& e : log.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"lr", e.lr},
                          {"total", e.total},
                          {"ce", e.ce},
                          {"dis", e.dis},
                          {"v_clip", e.diagnostics.v_clip},
                          {"separation", e.diagnostics.separation},
                          {"holdout_ce", e.diagnostics.holdout_ce},
                          {"holdout_accuracy", e.diagnostics.holdout_accuracy}});
    return {{"initial", diagnostics_json(log.initial)}, {"epochs", epochs}};
}

json subsets_json(std::span<const eval::SubsetResult> subsets) {
    json arr = json::array();
    for (const auto& s : subsets)
        arr.push_back({{"id", s.id},
                       {"family", s.family},
                       {"condition", s.condition},
                       {"seen", s.seen},
                       {"count", s.count},
                       {"accuracy", s.accuracy},
                       {"ap", s.ap}});
    return arr;
}

json protocol_json(const config::RunConfig& config, const eval::ProtocolReport& report) {
    json runs = json::array();
    struct Acc {
        std::vector<double> mean, map, seen, unseen;
        std::map<std::string, std::vector<double>> conditions;
    };
    std::map<std::string, Acc> per_arm;
    for (const auto& r : report.runs) {
        json conds = json::object();
        auto& acc = per_arm[config::arm_name(r.arm)];
        for (const auto& [name, value] : eval::condition_means(r.subsets)) {
            conds[name] = value;
            acc.conditions[name].push_back(value);
        }
        acc.mean.push_back(r.mean_accuracy);
        acc.map.push_back(r.map);
        acc.seen.push_back(r.seen_accuracy);
        acc.unseen.push_back(r.unseen_accuracy);
        runs.push_back({{"seed", r.seed},
                        {"arm", config::arm_name(r.arm)},
                        {"avg", r.mean_accuracy},
                        {"map", r.map},
                        {"seen_accuracy", r.seen_accuracy},
                        {"unseen_accuracy", r.unseen_accuracy},
                        {"conditions", conds},
                        {"subsets", subsets_json(r.subsets)},
                        {"train", train_log_json(r.log)}});
    }
    json arms = json::object();
    for (const auto& [name, acc] : per_arm) {
        json conds = json::object();
        for (const auto& [c, values] : acc.conditions) conds[c] = mean(values);
        arms[name] = {{"avg", mean(acc.mean)},
                      {"map", mean(acc.map)},
                      {"seen_accuracy", mean(acc.seen)},
                      {"unseen_accuracy", mean(acc.unseen)},
                      {"conditions", conds},
                      {"runs", acc.mean.size()}};
    }
    return {{"config", config_json(config)}, {"runs", runs}, {"arms", arms}};
}

json timing_json(const eval::ProtocolReport& report) {
    json runs = json::array();
    double total = 0;
    for (const auto& r : report.runs) {
        runs.push_back({{"seed", r.seed}, {"arm", config::arm_name(r.arm)}, {"seconds", r.seconds}});
        total += r.seconds;
    }
    return {{"runs", runs}, {"total_seconds", total}};
}

json eval_json(const config::RunConfig& config, config::Arm arm, std::span<const eval::SubsetResult> subsets) {
    std::vector<double> accs, aps;
    json conds = json::object();
    for (const auto& s : subsets)
        if (s.condition == eval::kCleanCondition) {
            accs.push_back(s.accuracy);
            aps.push_back(s.ap);
        }
    for (const auto& [name, value] : eval::condition_means(subsets)) conds[name] = value;
    return {{"config", config_json(config)},
            {"seed", config.seed},
            {"arm", config::arm_name(arm)},
            {"avg", mean(accs)},
            {"map", mean(aps)},
            {"conditions", conds},
            {"subsets", subsets_json(subsets)}};
}

std::string subsets_table(std::span<const eval::SubsetResult> subsets, const std::string& row_label) {
    std::vector<std::vector<std::string>> clean = {{"Method"}};
    std::vector<std::string> acc_row = {row_label + " acc"}, ap_row = {row_label + " AP"};
    std::vector<double> accs, aps;
    for (const auto& s : subsets) {
        if (s.condition != eval::kCleanCondition) continue;
        clean[0].push_back(s.family + (s.seen ? "*" : ""));
        acc_row.push_back(fixed(100.0 * s.accuracy, 1));
        ap_row.push_back(fixed(100.0 * s.ap, 1));
        accs.push_back(s.accuracy);
        aps.push_back(s.ap);
    }
    clean[0].push_back("Avg (%)");
    acc_row.push_back(fixed(100.0 * mean(accs), 1));
    ap_row.push_back(fixed(100.0 * mean(aps), 1));
    clean.push_back(acc_row);
    clean.push_back(ap_row);
    std::string out = render(clean);

    const auto conds = eval::condition_means(subsets);
    if (conds.size() > 1) {
        std::vector<std::vector<std::string>> deg = {{"Method"}, {row_label}};
        for (const auto& [name, value] : conds) {
            deg[0].push_back(name == eval::kCleanCondition ? "Clean" : name);
            deg[1].push_back(fixed(100.0 * value, 1));
        }
        out += "\n" + render(deg);
    }
    return out;
}

std::string protocol_table(const config::RunConfig& config, const eval::ProtocolReport& report) {
    std::ostringstream out;
    out << "Trained on " << generator_name(config.data.train_family) << " (* = seen family)\n\n";
    for (const auto& r : report.runs)
        out << subsets_table(r.subsets, config::arm_name(r.arm) + " s" + std::to_string(r.seed)) << "\n";

    std::vector<std::vector<std::string>> summary = {{"Arm", "Seen acc", "Unseen acc", "Avg (%)", "mAP"}};
    std::map<std::string, std::vector<const eval::RunResult*>> by_arm;
    for (const auto& r : report.runs) by_arm[config::arm_name(r.arm)].push_back(&r);
    for (const auto& [name, runs] : by_arm) {
        std::vector<double> seen, unseen, avg, map;
        for (const auto* r : runs) {
            seen.push_back(r->seen_accuracy);
            unseen.push_back(r->unseen_accuracy);
            avg.push_back(r->mean_accuracy);
            map.push_back(r->map);
        }
        summary.push_back({name, fixed(100.0 * mean(seen), 1), fixed(100.0 * mean(unseen), 1), fixed(100.0 * mean(avg), 1),
                           fixed(100.0 * mean(map), 1)});
    }
    out << "Mean over " << config.protocol.seeds.size() << " seed(s)\n" << render(summary);
    return out.str();
}

}  // namespace mirage::report

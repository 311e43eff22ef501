#pragma once

// Metrics persistence: per-epoch supervised stats and per-step posterior
// training logs as CSV, a numeric reader for both, and a tidy long-format
// merge ({run, step, metric, value}) for external plotting. All doubles are
// written with 17 significant digits so a parse-back reproduces them exactly.

#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/gfn.hpp"
#include "cogsense/run_config.hpp"
#include "cogsense/sft.hpp"

namespace cogsense {

inline void write_sft_metrics_csv(const std::string& path,
                                  std::span<const SftEpochMetrics> history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "epoch,ce,mse,total,eval_accuracy,eval_mse\n";
    for (const SftEpochMetrics& m : history) {
        out << m.epoch << ',' << detail::format_double(m.ce) << ','
            << detail::format_double(m.mse) << ',' << detail::format_double(m.total) << ','
            << detail::format_double(m.eval_accuracy) << ','
            << detail::format_double(m.eval_mse) << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_gfn_log_csv(const std::string& path, std::span<const GfnStepLog> log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "step,accept_rate,mean_reward,mean_r_ans,mean_r_lvip,subtb_loss,delta,skipped\n";
    for (const GfnStepLog& row : log) {
        out << row.step << ',' << detail::format_double(row.accept_rate) << ','
            << detail::format_double(row.mean_reward) << ','
            << detail::format_double(row.mean_r_ans) << ','
            << detail::format_double(row.mean_r_lvip) << ','
            << detail::format_double(row.subtb_loss) << ','
            << detail::format_double(row.delta) << ',' << (row.skipped ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

// Numeric CSV with a header row; the first column is the step/epoch axis.
struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline MetricsTable read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open metrics file");
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw std::runtime_error(path + ": empty metrics file");
    }
    MetricsTable table;
    {
        std::istringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) table.columns.push_back(cell);
    }
    if (table.columns.empty()) throw std::runtime_error(path + ": empty metrics file");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number '" +
                                         cell + "'");
            }
        }
        if (row.size() != table.columns.size()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(table.columns.size()) + " columns, got " +
                                     std::to_string(row.size()));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

// Long-format merge of metrics files: one row per (run, step, metric). The
// run label is the file stem; every column after the first becomes a metric.
inline std::string plotdata_csv(std::span<const std::string> paths) {
    std::ostringstream out;
    out << "run,step,metric,value\n";
    for (const std::string& path : paths) {
        const MetricsTable table = read_metrics_csv(path);
        const std::string run = std::filesystem::path(path).stem().string();
        for (const std::vector<double>& row : table.rows) {
            for (size_t j = 1; j < table.columns.size(); ++j) {
                out << run << ',' << detail::format_double(row[0]) << ',' << table.columns[j]
                    << ',' << detail::format_double(row[j]) << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace cogsense

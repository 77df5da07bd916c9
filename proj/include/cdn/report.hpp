#pragma once

// Result tables (rows = reservoir sizes, columns = configuration labels) and
// per-epoch accuracy curves as delimited text for external plotting.

#include "cdn/error.hpp"
#include "cdn/config.hpp"
#include "cdn/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace cdn {

enum class ReportFormat { Text, Markdown, Csv };

namespace detail {

inline std::string percent(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f %%", 100.0 * v);
    return buf;
}

inline std::string pad(const std::string& s, std::size_t width)
{
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

} // namespace detail

/// "Best mean test accuracy" table: the maximum over epochs of the
/// mean-over-replications test accuracy, one cell per (size, label).
inline std::string render_table(std::span<const Metrics> runs, const std::string& dataset = "dataset",
                                ReportFormat format = ReportFormat::Text)
{
    require(!runs.empty(), ErrorCategory::Config, "report: no runs");
    std::vector<std::size_t> sizes;
    std::vector<std::string> labels;
    for (const auto& m : runs) {
        if (std::find(sizes.begin(), sizes.end(), m.reservoir_size) == sizes.end()) sizes.push_back(m.reservoir_size);
        if (std::find(labels.begin(), labels.end(), m.label) == labels.end()) labels.push_back(m.label);
    }
    std::sort(sizes.begin(), sizes.end());
    auto cell = [&](std::size_t size, const std::string& label) -> const Metrics* {
        for (const auto& m : runs)
            if (m.reservoir_size == size && m.label == label) return &m;
        return nullptr;
    };
    const Metrics& first = runs.front();
    std::ostringstream out;

    if (format == ReportFormat::Csv) {
        out << "reservoir_neurons";
        for (const auto& l : labels) out << ',' << l;
        out << '\n';
        for (const auto s : sizes) {
            out << s;
            for (const auto& l : labels) {
                out << ',';
                if (const auto* m = cell(s, l)) out << detail::format_double(m->best_mean_accuracy);
            }
            out << '\n';
        }
        return out.str();
    }

    const std::string title = "Best Mean Test Accuracy: " + dataset;
    const std::string footer = dataset + " Experiment: " + std::to_string(first.replications) + " train/test splits, "
                               + std::to_string(first.epochs) + " epochs, reservoir " + std::string(sharing_name(first.sharing));
    if (format == ReportFormat::Markdown) {
        out << "**" << title << "**\n\n| Reservoir Neurons |";
        for (const auto& l : labels) out << ' ' << l << " |";
        out << "\n|---:|";
        for (std::size_t i = 0; i < labels.size(); ++i) out << "---:|";
        out << '\n';
        for (const auto s : sizes) {
            out << "| " << s << " |";
            for (const auto& l : labels) {
                const auto* m = cell(s, l);
                out << ' ' << (m ? detail::percent(m->best_mean_accuracy) : std::string("-")) << " |";
            }
            out << '\n';
        }
        out << "\n_" << footer << "_\n";
        return out.str();
    }

    std::size_t width = 10;
    for (const auto& l : labels) width = std::max(width, l.size() + 2);
    const std::string head = "Reservoir Neurons";
    std::string header = head;
    for (const auto& l : labels) header += detail::pad(l, width);
    const std::string rule(std::max(header.size(), title.size()), '-');
    out << title << '\n' << rule << '\n' << header << '\n' << rule << '\n';
    for (const auto s : sizes) {
        std::string row = detail::pad(std::to_string(s), head.size());
        for (const auto& l : labels) {
            const auto* m = cell(s, l);
            row += detail::pad(m ? detail::percent(m->best_mean_accuracy) : std::string("-"), width);
        }
        out << row << '\n';
    }
    out << rule << '\n' << footer << '\n';
    return out.str();
}

/// Comma-separated mean test accuracy per sampled epoch, one column per run.
inline std::string render_curve_csv(std::span<const Metrics> runs)
{
    require(!runs.empty(), ErrorCategory::Config, "report: no runs");
    const auto& epochs = runs.front().curve_epochs;
    for (const auto& m : runs)
        require(m.curve_epochs == epochs, ErrorCategory::Config, "report: runs sample different epochs");
    std::ostringstream out;
    out << "epoch";
    for (const auto& m : runs) out << ',' << m.label << " N_x=" << m.reservoir_size;
    out << '\n';
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        out << epochs[i];
        for (const auto& m : runs) out << ',' << detail::format_double(m.mean_test_curve[i]);
        out << '\n';
    }
    return out.str();
}

inline std::string render_summary(const Metrics& m)
{
    std::ostringstream out;
    out << m.label << " N_x=" << m.reservoir_size << ": mean test accuracy " << detail::percent(m.mean_accuracy)
        << " (sd " << detail::percent(m.stddev_accuracy) << ", min " << detail::percent(m.min_accuracy) << ", max "
        << detail::percent(m.max_accuracy) << ") over " << m.replications << " replications; best mean "
        << detail::percent(m.best_mean_accuracy) << " at epoch " << m.best_epoch << "; rho(W^x) = "
        << detail::format_double(m.natural_radius) << '\n';
    return out.str();
}

} // namespace cdn

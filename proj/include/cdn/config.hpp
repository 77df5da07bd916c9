#pragma once

// Text form of ExperimentConfig: one "key = value" per line, '#' comments.
// The same keys (with '-' for '_') are the CLI flag names.

#include "cdn/error.hpp"
#include "cdn/harness.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cdn {

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& value)
{
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v))
        fail(ErrorCategory::Config, key + ": expected a number, got \"" + value + "\"");
    return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value)
{
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size())
        fail(ErrorCategory::Config, key + ": expected a non-negative integer, got \"" + value + "\"");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail(ErrorCategory::Config, key + ": expected true or false, got \"" + value + "\"");
}

inline std::string format_double(double v)
{
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace detail

/// Keys accepted by apply_setting, in echo order.
inline const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys = {
        "manifest",      "output",         "label",         "reservoir_size", "leak_rate",    "activation",
        "connection_density", "input_scale", "spectral_target", "esn_seed",     "train_mode",   "epochs",
        "learning_rate", "beta1",          "beta2",         "epsilon",        "ridge_lambda", "batch_size",
        "train_seed",    "target_len",     "replications",  "reservoir_sharing", "base_seed", "standardize",
        "pool_start",    "pool_end",       "curve_stride",  "threads",
    };
    return keys;
}

inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& raw)
{
    using namespace detail;
    const std::string value = trim(raw);
    if (key == "manifest") c.manifest = value;
    else if (key == "output") c.output = value;
    else if (key == "label") c.label = value;
    else if (key == "reservoir_size") c.esn.reservoir_size = parse_count(key, value);
    else if (key == "leak_rate") c.esn.leak_rate = parse_double(key, value);
    else if (key == "activation") {
        if (value == "relu") c.esn.activation = Activation::Relu;
        else if (value == "tanh") c.esn.activation = Activation::Tanh;
        else fail(ErrorCategory::Config, "activation: expected relu or tanh, got \"" + value + "\"");
    } else if (key == "connection_density") c.esn.connection_density = parse_double(key, value);
    else if (key == "input_scale") c.esn.input_scale = parse_double(key, value);
    else if (key == "spectral_target") {
        if (value == "none" || value.empty()) c.esn.spectral_target.reset();
        else c.esn.spectral_target = parse_double(key, value);
    } else if (key == "esn_seed") c.esn.seed = parse_count(key, value);
    else if (key == "train_mode") {
        if (value == "adam") c.train.mode = TrainMode::SoftmaxAdam;
        else if (value == "gd") c.train.mode = TrainMode::SoftmaxGd;
        else if (value == "ridge") c.train.mode = TrainMode::Ridge;
        else fail(ErrorCategory::Config, "train_mode: expected adam, gd or ridge, got \"" + value + "\"");
    } else if (key == "epochs") c.train.epochs = parse_count(key, value);
    else if (key == "learning_rate") c.train.learning_rate = parse_double(key, value);
    else if (key == "beta1") c.train.beta1 = parse_double(key, value);
    else if (key == "beta2") c.train.beta2 = parse_double(key, value);
    else if (key == "epsilon") c.train.epsilon = parse_double(key, value);
    else if (key == "ridge_lambda") c.train.ridge_lambda = parse_double(key, value);
    else if (key == "batch_size") c.train.batch_size = value == "full" ? 0 : parse_count(key, value);
    else if (key == "train_seed") c.train.seed = parse_count(key, value);
    else if (key == "target_len") {
        if (value == "none") c.target_len.reset();
        else c.target_len = parse_count(key, value);
    } else if (key == "replications") c.replications = parse_count(key, value);
    else if (key == "reservoir_sharing") {
        if (value == "per-experiment") c.sharing = ReservoirSharing::PerExperiment;
        else if (value == "per-replication") c.sharing = ReservoirSharing::PerReplication;
        else fail(ErrorCategory::Config, "reservoir_sharing: expected per-experiment or per-replication");
    } else if (key == "base_seed") c.base_seed = parse_count(key, value);
    else if (key == "standardize") c.standardize = parse_bool(key, value);
    else if (key == "pool_start") c.window.start = parse_count(key, value);
    else if (key == "pool_end") {
        if (value == "none") c.window.end.reset();
        else c.window.end = parse_count(key, value);
    } else if (key == "curve_stride") c.curve_stride = parse_count(key, value);
    else if (key == "threads") c.threads = parse_count(key, value);
    else fail(ErrorCategory::Config, "unknown setting \"" + key + "\"");
}

inline ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base = {})
{
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            fail(ErrorCategory::Config, "config line " + std::to_string(line_no) + ": expected key = value");
        try {
            apply_setting(base, detail::trim(body.substr(0, eq)), body.substr(eq + 1));
        } catch (const Error& e) {
            throw Error(e.category(), "config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

inline std::string format_config_text(const ExperimentConfig& c)
{
    using detail::format_double;
    std::ostringstream out;
    out << "manifest = " << c.manifest.string() << '\n'
        << "output = " << c.output.string() << '\n'
        << "label = " << c.label << '\n'
        << "reservoir_size = " << c.esn.reservoir_size << '\n'
        << "leak_rate = " << format_double(c.esn.leak_rate) << '\n'
        << "activation = " << (c.esn.activation == Activation::Relu ? "relu" : "tanh") << '\n'
        << "connection_density = " << format_double(c.esn.connection_density) << '\n'
        << "input_scale = " << format_double(c.esn.input_scale) << '\n'
        << "spectral_target = " << (c.esn.spectral_target ? format_double(*c.esn.spectral_target) : "none") << '\n'
        << "esn_seed = " << c.esn.seed << '\n'
        << "train_mode = " << train_mode_name(c.train.mode) << '\n'
        << "epochs = " << c.train.epochs << '\n'
        << "learning_rate = " << format_double(c.train.learning_rate) << '\n'
        << "beta1 = " << format_double(c.train.beta1) << '\n'
        << "beta2 = " << format_double(c.train.beta2) << '\n'
        << "epsilon = " << format_double(c.train.epsilon) << '\n'
        << "ridge_lambda = " << format_double(c.train.ridge_lambda) << '\n'
        << "batch_size = " << (c.train.batch_size == 0 ? std::string("full") : std::to_string(c.train.batch_size)) << '\n'
        << "train_seed = " << c.train.seed << '\n'
        << "target_len = " << (c.target_len ? std::to_string(*c.target_len) : std::string("none")) << '\n'
        << "replications = " << c.replications << '\n'
        << "reservoir_sharing = " << sharing_name(c.sharing) << '\n'
        << "base_seed = " << c.base_seed << '\n'
        << "standardize = " << (c.standardize ? "true" : "false") << '\n'
        << "pool_start = " << c.window.start << '\n'
        << "pool_end = " << (c.window.end ? std::to_string(*c.window.end) : std::string("none")) << '\n'
        << "curve_stride = " << c.curve_stride << '\n'
        << "threads = " << c.threads << '\n';
    return out.str();
}

} // namespace cdn

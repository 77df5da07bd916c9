#pragma once

// Synthetic stand-in for per-frame CNN features. Each class is a temporal
// template whose per-dimension time average is exactly zero, so the classes
// share the same time-averaged input and can only be told apart from how the
// frames evolve.

#include "cdn/dataset.hpp"
#include "cdn/error.hpp"
#include "cdn/linalg.hpp"
#include "cdn/random.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace cdn {

enum class SynthPattern {
    /// Sinusoid per dimension with fixed per-dimension phase offsets; classes
    /// differ only in the integer number of cycles per sequence.
    Frequency,
    /// One Gaussian bump shared by all classes, placed at a class-specific onset.
    Bump,
};

struct SynthSpec {
    std::size_t classes = 5;
    std::size_t per_class = 40;
    std::size_t feature_dim = 16;
    std::size_t length = 60;
    SynthPattern pattern = SynthPattern::Frequency;
    double noise = 0.1;
    double amplitude = 1.0;
    /// 0 reproduces the template exactly; 1 draws a uniformly random time
    /// shift (Frequency) or onset jitter of up to length/10 frames (Bump).
    double jitter = 1.0;
    std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& s)
{
    require(s.classes >= 2, ErrorCategory::Config, "synth: need at least 2 classes");
    require(s.per_class >= 2, ErrorCategory::Config, "synth: need at least 2 videos per class");
    require(s.feature_dim >= 1, ErrorCategory::Config, "synth: feature_dim must be positive");
    require(s.length >= 2, ErrorCategory::Config, "synth: sequence length must be at least 2");
    require(s.noise >= 0.0 && s.amplitude > 0.0, ErrorCategory::Config, "synth: noise >= 0 and amplitude > 0");
    require(s.jitter >= 0.0 && s.jitter <= 1.0, ErrorCategory::Config, "synth: jitter must lie in [0, 1]");
    if (s.pattern == SynthPattern::Frequency)
        require(s.length >= 2 * s.classes + 2, ErrorCategory::Config,
                "synth: frequency pattern needs length >= 2 * classes + 2 for distinct sub-Nyquist frequencies");
}

inline std::string synth_class_label(std::size_t c)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "class%02zu", c);
    return buf;
}

inline std::string synth_video_id(std::size_t c, std::size_t v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "class%02zu_v%03zu", c, v);
    return buf;
}

/// Integer cycle count of class c, spread over [1, length/2).
inline std::size_t synth_frequency(const SynthSpec& s, std::size_t c)
{
    const std::size_t span = s.length / 2 - 1;
    const std::size_t stride = std::max<std::size_t>(1, span / s.classes);
    return 1 + c * stride;
}

namespace detail {

// Per-dimension phase offsets and bump weights, shared by all classes.
struct SynthTables {
    Vector phase;
    Vector bump_weight;
};

inline SynthTables synth_tables(const SynthSpec& s)
{
    Rng rng(derive_seed(s.seed, 0x7461626cULL));
    const auto dim = static_cast<Eigen::Index>(s.feature_dim);
    SynthTables t{Vector(dim), Vector(dim)};
    for (Eigen::Index d = 0; d < dim; ++d) t.phase(d) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index d = 0; d < t.bump_weight.size(); ++d) t.bump_weight(d) = rng.uniform(-1.0, 1.0);
    return t;
}

// Noiseless signal of class c with a given shift, mean-matched per dimension.
inline Matrix synth_signal(const SynthSpec& s, const SynthTables& t, std::size_t c, double shift)
{
    const auto len = static_cast<Eigen::Index>(s.length);
    const auto dim = static_cast<Eigen::Index>(s.feature_dim);
    Matrix m(len, dim);
    if (s.pattern == SynthPattern::Frequency) {
        const double omega = 2.0 * std::numbers::pi * static_cast<double>(synth_frequency(s, c)) / static_cast<double>(s.length);
        for (Eigen::Index n = 0; n < len; ++n)
            for (Eigen::Index d = 0; d < dim; ++d)
                m(n, d) = s.amplitude * std::sin(omega * (static_cast<double>(n) + shift) + t.phase(d));
    } else {
        const double width = std::max(1.0, static_cast<double>(s.length) / 12.0);
        const double lo = 2.0 * width;
        const double hi = static_cast<double>(s.length) - 1.0 - 2.0 * width;
        const double frac = s.classes > 1 ? static_cast<double>(c) / static_cast<double>(s.classes - 1) : 0.5;
        const double centre = lo + frac * std::max(0.0, hi - lo) + shift;
        for (Eigen::Index n = 0; n < len; ++n) {
            const double z = (static_cast<double>(n) - centre) / width;
            const double g = std::exp(-0.5 * z * z);
            for (Eigen::Index d = 0; d < dim; ++d) m(n, d) = s.amplitude * t.bump_weight(d) * g;
        }
    }
    m.rowwise() -= m.colwise().mean();
    return m;
}

} // namespace detail

/// The noiseless, unshifted template of class c (length x feature_dim).
inline Matrix synth_template(const SynthSpec& s, std::size_t c)
{
    validate(s);
    require(c < s.classes, ErrorCategory::Config, "synth_template: class out of range");
    return detail::synth_signal(s, detail::synth_tables(s), c, 0.0);
}

/// Generates classes * per_class sequences in class-major order.
inline std::vector<FeatureSequence> synth_generate(const SynthSpec& s)
{
    validate(s);
    const auto tables = detail::synth_tables(s);
    std::vector<FeatureSequence> out;
    out.reserve(s.classes * s.per_class);
    for (std::size_t c = 0; c < s.classes; ++c) {
        for (std::size_t v = 0; v < s.per_class; ++v) {
            Rng rng(derive_seed(derive_seed(s.seed, c + 1), v));
            double shift = 0.0;
            if (s.pattern == SynthPattern::Frequency)
                shift = s.jitter * rng.uniform(0.0, static_cast<double>(s.length));
            else
                shift = s.jitter * rng.uniform(-1.0, 1.0) * static_cast<double>(s.length) / 10.0;
            Matrix m = detail::synth_signal(s, tables, c, shift);
            if (s.noise > 0.0)
                for (Eigen::Index n = 0; n < m.rows(); ++n)
                    for (Eigen::Index d = 0; d < m.cols(); ++d) m(n, d) += s.noise * rng.normal();
            out.push_back({synth_video_id(c, v), synth_class_label(c), std::move(m)});
        }
    }
    return out;
}

inline DatasetManifest synth_manifest(const SynthSpec& s, const std::vector<FeatureSequence>& data,
                                      const std::filesystem::path& base_dir)
{
    DatasetManifest m;
    m.base_dir = base_dir;
    m.feature_dim = s.feature_dim;
    for (std::size_t c = 0; c < s.classes; ++c) m.class_set.push_back(synth_class_label(c));
    m.metadata = {{"source", "synth"},
                  {"pattern", s.pattern == SynthPattern::Frequency ? "frequency" : "bump"},
                  {"length", std::to_string(s.length)},
                  {"noise", std::to_string(s.noise)},
                  {"seed", std::to_string(s.seed)}};
    for (const auto& seq : data)
        m.entries.push_back({seq.video_id, std::filesystem::path("features") / (seq.video_id + ".cdnf"), seq.label});
    return m;
}

/// Writes <dir>/manifest.tsv and one CDNF file per video under <dir>/features.
inline DatasetManifest write_synth_dataset(const SynthSpec& s, const std::filesystem::path& dir)
{
    const auto data = synth_generate(s);
    auto manifest = synth_manifest(s, data, dir);
    for (std::size_t i = 0; i < data.size(); ++i)
        write_feature_file(manifest.resolve(manifest.entries[i]), data[i].features);
    write_manifest(dir / "manifest.tsv", manifest);
    return manifest;
}

} // namespace cdn

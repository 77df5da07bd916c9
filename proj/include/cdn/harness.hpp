#pragma once

// End-to-end experiment: features -> reservoir -> temporal averaging ->
// readout, repeated over stratified train/test replications.

#include "cdn/binary_io.hpp"
#include "cdn/dataset.hpp"
#include "cdn/error.hpp"
#include "cdn/readout.hpp"
#include "cdn/reservoir.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace cdn {

enum class ReservoirSharing {
    /// One reservoir draw for all replications; pooling happens once.
    PerExperiment,
    /// A fresh reservoir per replication, seeded from (esn.seed, index).
    PerReplication,
};

struct ExperimentConfig {
    std::filesystem::path manifest;
    std::filesystem::path output;
    EsnConfig esn;
    TrainSpec train;
    /// Frames per video after padding/truncation; unset keeps native lengths.
    std::optional<std::size_t> target_len = 160;
    std::size_t replications = 100;
    ReservoirSharing sharing = ReservoirSharing::PerExperiment;
    std::uint64_t base_seed = 0;
    /// Per-dimension standardisation of raw features before the reservoir.
    bool standardize = false;
    PoolWindow window;
    /// Test accuracy is sampled every curve_stride epochs (and at the last).
    std::size_t curve_stride = 1;
    std::size_t threads = 1;
    /// Column label used by the report table.
    std::string label = "features";
};

inline void validate(const ExperimentConfig& c)
{
    validate(c.esn);
    validate(c.train);
    require(c.replications >= 1, ErrorCategory::Config, "replications must be at least 1");
    require(c.curve_stride >= 1, ErrorCategory::Config, "curve_stride must be at least 1");
    require(c.threads >= 1, ErrorCategory::Config, "threads must be at least 1");
    if (c.target_len) require(*c.target_len >= 1, ErrorCategory::Config, "target_len must be at least 1");
}

/// Pooled representation of every video, one row per manifest entry.
struct PooledDataset {
    Matrix rows; // M x (1 + N_u + N_x)
    std::vector<std::size_t> labels;
    std::vector<std::string> video_ids;
    std::vector<std::string> class_labels;
    std::size_t input_dim = 0;
    std::size_t reservoir_size = 0;
    double natural_radius = 0.0;

    /// Columns [1; u] only, i.e. the pooled raw input without the reservoir.
    [[nodiscard]] Matrix raw_input_slice() const { return rows.leftCols(static_cast<Eigen::Index>(1 + input_dim)); }

    /// Id/label view sufficient for split planning.
    [[nodiscard]] DatasetManifest manifest_view() const
    {
        DatasetManifest m;
        m.class_set = class_labels;
        m.feature_dim = input_dim;
        for (std::size_t i = 0; i < video_ids.size(); ++i) m.entries.push_back({video_ids[i], {}, class_labels[labels[i]]});
        return m;
    }
};

struct PoolOptions {
    bool standardize = false;
    PoolWindow window;
    std::size_t threads = 1;
};

namespace detail {

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace detail

/// Runs each sequence through `weights` and pools it. Row order follows `data`.
inline PooledDataset pool_sequences(const std::vector<FeatureSequence>& data, const std::vector<std::string>& class_set,
                                    const ReservoirWeights& weights, const EsnConfig& esn,
                                    std::optional<std::size_t> target_len, const PoolOptions& options = {})
{
    require(!data.empty(), ErrorCategory::Config, "no videos to pool");
    PooledDataset out;
    out.class_labels = class_set;
    out.input_dim = weights.input_dim();
    out.reservoir_size = weights.reservoir_size();
    out.natural_radius = weights.natural_radius();
    out.rows.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(weights.pooled_dim()));
    out.labels.resize(data.size());
    out.video_ids.resize(data.size());
    std::optional<Standardizer> standardizer;
    if (options.standardize) standardizer = Standardizer::fit(data);

    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto it = std::find(class_set.begin(), class_set.end(), data[i].label);
        require(it != class_set.end(), ErrorCategory::Format,
                "video " + data[i].video_id + ": label \"" + data[i].label + "\" outside the class set");
        out.labels[i] = static_cast<std::size_t>(it - class_set.begin());
        out.video_ids[i] = data[i].video_id;
    }
    detail::parallel_for(data.size(), options.threads, [&](std::size_t i) {
        try {
            FeatureSequence seq = data[i];
            if (standardizer) seq.features = standardizer->apply(seq.features);
            if (target_len) seq = fit_length(seq, *target_len);
            const auto states = run_sequence(weights, seq.features, esn);
            out.rows.row(static_cast<Eigen::Index>(i)) = pool_states(seq.features, states, options.window).sigma_x.transpose();
        } catch (const Error& err) {
            throw Error(err.category(), "video " + data[i].video_id + ": " + err.what());
        }
    });
    return out;
}

/// Builds one reservoir from esn_config and pools every manifest video.
inline PooledDataset pool_dataset(const DatasetManifest& manifest, const EsnConfig& esn_config,
                                  std::optional<std::size_t> target_len, const PoolOptions& options = {})
{
    const auto data = load_dataset(manifest);
    const auto weights = init_reservoir(esn_config, manifest.feature_dim);
    return pool_sequences(data, manifest.class_set, weights, esn_config, target_len, options);
}

// ---------------------------------------------------------------------------

/// Replaces the built-in readout training (e.g. for degenerate baselines).
using ReadoutTrainer = std::function<ReadoutModel(const Matrix& rows, const std::vector<std::size_t>& labels,
                                                  const std::vector<std::string>& class_labels)>;

struct PhaseTimings {
    double load_seconds = 0.0;
    double pool_seconds = 0.0;
    double train_seconds = 0.0;
};

struct Metrics {
    std::string label;
    std::size_t reservoir_size = 0;
    std::size_t input_dim = 0;
    std::size_t epochs = 0;
    std::size_t replications = 0;
    ReservoirSharing sharing = ReservoirSharing::PerExperiment;
    TrainMode mode = TrainMode::SoftmaxAdam;
    double natural_radius = 0.0;
    bool complete = true;

    /// Final-epoch test accuracy of each finished replication.
    std::vector<double> replication_accuracy;
    double mean_accuracy = 0.0;
    double stddev_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;

    /// Mean-over-replications test accuracy at each sampled epoch.
    std::vector<std::size_t> curve_epochs;
    std::vector<double> mean_test_curve;
    /// Mean-over-replications training loss, one entry per epoch.
    std::vector<double> mean_train_loss;
    /// Maximum of mean_test_curve and the epoch where it first occurs.
    double best_mean_accuracy = 0.0;
    std::size_t best_epoch = 0;

    PhaseTimings timings;
};

struct ReplicationResult {
    double final_accuracy = 0.0;
    std::vector<double> test_curve;
    std::vector<double> loss_curve;
};

struct ExperimentHooks {
    /// Receives the aggregate of finished replications before an abort rethrows.
    std::function<void(const Metrics&)> on_partial;
};

inline std::vector<std::size_t> curve_epochs(std::size_t epochs, std::size_t stride)
{
    std::vector<std::size_t> out;
    for (std::size_t e = stride; e <= epochs; e += stride) out.push_back(e);
    if (out.empty() || out.back() != epochs) out.push_back(epochs);
    return out;
}

inline ReplicationResult run_replication(const PooledDataset& pooled, const SplitPlan& plan,
                                         const ExperimentConfig& config, const ReadoutTrainer& trainer = {})
{
    const Matrix train_rows = detail::gather_rows(pooled.rows, plan.train_rows);
    const Matrix test_rows = detail::gather_rows(pooled.rows, plan.test_rows);
    std::vector<std::size_t> train_labels, test_labels;
    for (const auto r : plan.train_rows) train_labels.push_back(pooled.labels[r]);
    for (const auto r : plan.test_rows) test_labels.push_back(pooled.labels[r]);

    const auto sampled = curve_epochs(config.train.epochs, config.curve_stride);
    ReplicationResult result;
    if (!trainer && config.train.mode != TrainMode::Ridge) {
        std::size_t next = 0;
        TrainSpec spec = config.train;
        spec.seed = derive_seed(config.train.seed, plan.replication_index);
        auto trained = train_softmax(train_rows, train_labels, pooled.class_labels, spec,
                                     [&](std::size_t epoch, const Matrix& w) {
                                         if (next < sampled.size() && sampled[next] == epoch) {
                                             result.test_curve.push_back(accuracy(w, test_rows, test_labels));
                                             ++next;
                                         }
                                     });
        result.loss_curve = std::move(trained.loss_curve);
        result.final_accuracy = result.test_curve.back();
        return result;
    }
    ReadoutModel model = trainer ? trainer(train_rows, train_labels, pooled.class_labels)
                                 : ridge_fit(train_rows, one_hot(train_labels, pooled.class_labels.size()),
                                             config.train.ridge_lambda, pooled.class_labels);
    validate(model);
    result.final_accuracy = accuracy(model.w_out, test_rows, test_labels);
    result.test_curve.assign(sampled.size(), result.final_accuracy);
    return result;
}

inline Metrics aggregate(const std::vector<std::optional<ReplicationResult>>& results, const ExperimentConfig& config,
                         const PooledDataset& pooled)
{
    Metrics m;
    m.label = config.label;
    m.reservoir_size = pooled.reservoir_size;
    m.input_dim = pooled.input_dim;
    m.epochs = config.train.epochs;
    m.sharing = config.sharing;
    m.mode = config.train.mode;
    m.natural_radius = pooled.natural_radius;
    m.curve_epochs = curve_epochs(config.train.epochs, config.curve_stride);
    m.mean_test_curve.assign(m.curve_epochs.size(), 0.0);

    std::size_t with_loss = 0;
    for (const auto& r : results) {
        if (!r) {
            m.complete = false;
            continue;
        }
        m.replication_accuracy.push_back(r->final_accuracy);
        for (std::size_t i = 0; i < m.mean_test_curve.size(); ++i) m.mean_test_curve[i] += r->test_curve[i];
        if (!r->loss_curve.empty()) {
            if (m.mean_train_loss.empty()) m.mean_train_loss.assign(r->loss_curve.size(), 0.0);
            for (std::size_t i = 0; i < r->loss_curve.size(); ++i) m.mean_train_loss[i] += r->loss_curve[i];
            ++with_loss;
        }
    }
    m.replications = m.replication_accuracy.size();
    if (m.replications == 0) return m;
    const auto count = static_cast<double>(m.replications);
    for (auto& v : m.mean_test_curve) v /= count;
    for (auto& v : m.mean_train_loss) v /= static_cast<double>(with_loss);

    double sum = 0.0;
    for (const auto a : m.replication_accuracy) sum += a;
    m.mean_accuracy = sum / count;
    double sq = 0.0;
    for (const auto a : m.replication_accuracy) sq += (a - m.mean_accuracy) * (a - m.mean_accuracy);
    m.stddev_accuracy = m.replications > 1 ? std::sqrt(sq / (count - 1.0)) : 0.0;
    m.min_accuracy = *std::min_element(m.replication_accuracy.begin(), m.replication_accuracy.end());
    m.max_accuracy = *std::max_element(m.replication_accuracy.begin(), m.replication_accuracy.end());
    // the mean can drift outside [min, max] by rounding when all values agree
    m.mean_accuracy = std::clamp(m.mean_accuracy, m.min_accuracy, m.max_accuracy);

    const auto best = std::max_element(m.mean_test_curve.begin(), m.mean_test_curve.end());
    m.best_mean_accuracy = *best;
    m.best_epoch = m.curve_epochs[static_cast<std::size_t>(best - m.mean_test_curve.begin())];
    return m;
}

/// Trains and evaluates the readout on every replication of a fixed pooled set.
inline Metrics evaluate_pooled(const PooledDataset& pooled, const ExperimentConfig& config,
                               const ReadoutTrainer& trainer = {}, const ExperimentHooks& hooks = {})
{
    validate(config);
    const auto manifest = pooled.manifest_view();
    std::vector<std::optional<ReplicationResult>> results(config.replications);
    const auto start = std::chrono::steady_clock::now();
    try {
        detail::parallel_for(config.replications, config.threads, [&](std::size_t r) {
            const auto plan = stratified_split(manifest, r, config.base_seed);
            results[r] = run_replication(pooled, plan, config, trainer);
        });
    } catch (...) {
        if (hooks.on_partial) hooks.on_partial(aggregate(results, config, pooled));
        throw;
    }
    auto metrics = aggregate(results, config, pooled);
    metrics.timings.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return metrics;
}

/// Runs the experiment on already-loaded sequences (manifest order).
inline Metrics run_experiment(const DatasetManifest& manifest, const std::vector<FeatureSequence>& data,
                              const ExperimentConfig& config, const ReadoutTrainer& trainer = {},
                              const ExperimentHooks& hooks = {})
{
    validate(config);
    const PoolOptions pool_options{config.standardize, config.window, config.threads};
    using clock = std::chrono::steady_clock;
    if (config.sharing == ReservoirSharing::PerExperiment) {
        const auto t0 = clock::now();
        const auto weights = init_reservoir(config.esn, manifest.feature_dim);
        const auto pooled = pool_sequences(data, manifest.class_set, weights, config.esn, config.target_len, pool_options);
        const auto t1 = clock::now();
        auto metrics = evaluate_pooled(pooled, config, trainer, hooks);
        metrics.timings.pool_seconds = std::chrono::duration<double>(t1 - t0).count();
        return metrics;
    }

    // Fresh reservoir per replication: pool inside each one.
    std::vector<std::optional<ReplicationResult>> results(config.replications);
    std::vector<double> radii(config.replications, 0.0);
    std::atomic<long long> pool_ns{0}, train_ns{0};
    PooledDataset last;
    std::mutex last_mutex;
    auto finish = [&](bool complete) {
        PooledDataset summary = last;
        double radius_sum = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < results.size(); ++r)
            if (results[r]) radius_sum += radii[r], ++n;
        summary.natural_radius = n ? radius_sum / static_cast<double>(n) : 0.0;
        auto m = aggregate(results, config, summary);
        m.complete = m.complete && complete;
        m.timings.pool_seconds = static_cast<double>(pool_ns.load()) * 1e-9;
        m.timings.train_seconds = static_cast<double>(train_ns.load()) * 1e-9;
        return m;
    };
    try {
        detail::parallel_for(config.replications, config.threads, [&](std::size_t r) {
            const auto t0 = clock::now();
            EsnConfig esn = config.esn;
            esn.seed = derive_seed(config.esn.seed, r);
            const auto weights = init_reservoir(esn, manifest.feature_dim);
            const auto pooled = pool_sequences(data, manifest.class_set, weights, esn, config.target_len,
                                               {config.standardize, config.window, 1});
            const auto t1 = clock::now();
            const auto plan = stratified_split(pooled.manifest_view(), r, config.base_seed);
            auto result = run_replication(pooled, plan, config, trainer);
            const auto t2 = clock::now();
            pool_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
            train_ns += std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count();
            radii[r] = pooled.natural_radius;
            results[r] = std::move(result);
            std::lock_guard lock(last_mutex);
            if (last.video_ids.empty()) {
                last.class_labels = pooled.class_labels;
                last.input_dim = pooled.input_dim;
                last.reservoir_size = pooled.reservoir_size;
                last.video_ids = pooled.video_ids;
            }
        });
    } catch (...) {
        if (hooks.on_partial) hooks.on_partial(finish(false));
        throw;
    }
    return finish(true);
}

/// Loads the manifest named in `config` and runs the experiment.
inline Metrics run_experiment(const ExperimentConfig& config, const ReadoutTrainer& trainer = {},
                              const ExperimentHooks& hooks = {})
{
    validate(config);
    const auto t0 = std::chrono::steady_clock::now();
    const auto manifest = load_manifest(config.manifest);
    const auto data = load_dataset(manifest);
    const double load = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto metrics = run_experiment(manifest, data, config, trainer, hooks);
    metrics.timings.load_seconds = load;
    return metrics;
}

// ---------------------------------------------------------------------------

inline std::string_view sharing_name(ReservoirSharing s)
{
    return s == ReservoirSharing::PerExperiment ? "per-experiment" : "per-replication";
}

inline std::string_view train_mode_name(TrainMode m)
{
    switch (m) {
    case TrainMode::SoftmaxAdam: return "adam";
    case TrainMode::SoftmaxGd: return "gd";
    case TrainMode::Ridge: return "ridge";
    }
    return "adam";
}

/// Deterministic JSON rendering. Wall-clock timings are written only when
/// asked for, so two runs with the same seeds give byte-identical output.
inline std::string metrics_to_json(const Metrics& m, bool include_timings = false)
{
    nlohmann::ordered_json j;
    j["label"] = m.label;
    j["reservoir_size"] = m.reservoir_size;
    j["input_dim"] = m.input_dim;
    j["epochs"] = m.epochs;
    j["replications"] = m.replications;
    j["reservoir_sharing"] = sharing_name(m.sharing);
    j["train_mode"] = train_mode_name(m.mode);
    j["natural_radius"] = m.natural_radius;
    j["complete"] = m.complete;
    j["mean_accuracy"] = m.mean_accuracy;
    j["stddev_accuracy"] = m.stddev_accuracy;
    j["min_accuracy"] = m.min_accuracy;
    j["max_accuracy"] = m.max_accuracy;
    j["best_mean_accuracy"] = m.best_mean_accuracy;
    j["best_epoch"] = m.best_epoch;
    j["replication_accuracy"] = m.replication_accuracy;
    j["curve_epochs"] = m.curve_epochs;
    j["mean_test_curve"] = m.mean_test_curve;
    j["mean_train_loss"] = m.mean_train_loss;
    if (include_timings) {
        j["timings"] = {{"load_seconds", m.timings.load_seconds},
                        {"pool_seconds", m.timings.pool_seconds},
                        {"train_seconds", m.timings.train_seconds}};
    }
    return j.dump(2) + "\n";
}

/// Epoch at which the mean test curve first reaches `fraction` of its final value.
inline std::size_t epochs_to_fraction_of_final(const Metrics& m, double fraction = 0.95)
{
    require(!m.mean_test_curve.empty(), ErrorCategory::Config, "metrics have no test curve");
    const double target = fraction * m.mean_test_curve.back();
    for (std::size_t i = 0; i < m.mean_test_curve.size(); ++i)
        if (m.mean_test_curve[i] >= target) return m.curve_epochs[i];
    return m.curve_epochs.back();
}

// ---------------------------------------------------------------------------
// CDNP pooled cache:
//   "CDNP" | version u8 | M u64 | D u64 | N_u u64 | N_x u64 | natural_radius f64
//   | K u64 | K x string | M x (string video_id | u64 label | D x f64)

inline constexpr std::string_view kPooledMagic = "CDNP";

inline std::string encode_pooled(const PooledDataset& p)
{
    std::string out;
    out.append(kPooledMagic);
    out.push_back(1);
    io::put_u64(out, static_cast<std::uint64_t>(p.rows.rows()));
    io::put_u64(out, static_cast<std::uint64_t>(p.rows.cols()));
    io::put_u64(out, p.input_dim);
    io::put_u64(out, p.reservoir_size);
    io::put_f64(out, p.natural_radius);
    io::put_u64(out, p.class_labels.size());
    for (const auto& c : p.class_labels) io::put_string(out, c);
    for (Eigen::Index r = 0; r < p.rows.rows(); ++r) {
        io::put_string(out, p.video_ids[static_cast<std::size_t>(r)]);
        io::put_u64(out, p.labels[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < p.rows.cols(); ++c) io::put_f64(out, p.rows(r, c));
    }
    return out;
}

inline PooledDataset decode_pooled(std::string_view data, const std::string& source)
{
    io::ByteReader in(data, source);
    in.expect_magic(kPooledMagic);
    if (const auto v = in.u8("version"); v != 1)
        fail(ErrorCategory::Format, source + ": unsupported CDNP version " + std::to_string(v));
    PooledDataset p;
    const auto m = in.u64("row count");
    const auto d = in.u64("column count");
    p.input_dim = in.u64("N_u");
    p.reservoir_size = in.u64("N_x");
    p.natural_radius = in.f64("natural radius");
    if (d != 1 + p.input_dim + p.reservoir_size)
        fail(ErrorCategory::Format, source + ": column count " + std::to_string(d) + " != 1 + N_u + N_x");
    if (m > in.remaining() || d > in.remaining()) fail(ErrorCategory::Format, source + ": implausible dimensions");
    const auto k = in.u64("class count");
    if (k == 0 || k > in.remaining()) fail(ErrorCategory::Format, source + ": implausible class count");
    for (std::uint64_t i = 0; i < k; ++i) p.class_labels.push_back(in.string("class label"));
    p.rows.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::uint64_t r = 0; r < m; ++r) {
        p.video_ids.push_back(in.string("video id"));
        const auto label = in.u64("label");
        if (label >= k) fail(ErrorCategory::Format, source + ": label index out of range at offset " + std::to_string(in.offset() - 8));
        p.labels.push_back(static_cast<std::size_t>(label));
        in.need(8 * d, "pooled row");
        for (std::uint64_t c = 0; c < d; ++c) p.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = in.f64("value");
    }
    if (in.remaining() != 0)
        fail(ErrorCategory::Format, source + ": " + std::to_string(in.remaining()) + " trailing bytes");
    return p;
}

inline void save_pooled(const std::filesystem::path& path, const PooledDataset& p) { io::write_file(path, encode_pooled(p)); }

inline PooledDataset load_pooled(const std::filesystem::path& path)
{
    return decode_pooled(io::read_file(path), path.string());
}

} // namespace cdn

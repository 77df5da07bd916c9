#pragma once

// Per-video feature sequences, the CDNF feature file, the dataset manifest,
// sequence length fitting, and stratified train/test split plans.

#include "cdn/binary_io.hpp"
#include "cdn/error.hpp"
#include "cdn/linalg.hpp"
#include "cdn/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cdn {

struct FeatureSequence {
    std::string video_id;
    std::string label;
    /// tau x N_u; row n is the feature vector of frame n.
    Matrix features;

    [[nodiscard]] std::size_t length() const noexcept { return static_cast<std::size_t>(features.rows()); }
    [[nodiscard]] std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

// ---------------------------------------------------------------------------
// CDNF: "CDNF" | version u8 | tau u64 | N_u u64 | tau*N_u float32, row-major.
// All integers and floats little-endian.

inline constexpr std::string_view kFeatureMagic = "CDNF";
inline constexpr std::uint8_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 1 + 8 + 8;

struct FeatureFileHeader {
    std::uint64_t length = 0;
    std::uint64_t feature_dim = 0;
};

inline std::string encode_feature_file(const Matrix& features)
{
    require(features.rows() >= 1 && features.cols() >= 1, ErrorCategory::Dimension,
            "feature matrix must have at least one frame and one dimension");
    std::string out;
    out.reserve(kFeatureHeaderBytes + 4 * static_cast<std::size_t>(features.size()));
    out.append(kFeatureMagic);
    out.push_back(static_cast<char>(kFeatureVersion));
    io::put_u64(out, static_cast<std::uint64_t>(features.rows()));
    io::put_u64(out, static_cast<std::uint64_t>(features.cols()));
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            const auto v = static_cast<float>(features(r, c));
            if (!std::isfinite(v))
                fail(ErrorCategory::Numerical, "feature value at frame " + std::to_string(r) + ", dim "
                                                   + std::to_string(c) + " is not finite as float32");
            io::put_f32(out, v);
        }
    }
    return out;
}

inline FeatureFileHeader read_feature_header(io::ByteReader& in)
{
    in.expect_magic(kFeatureMagic);
    const auto version = in.u8("version");
    if (version != kFeatureVersion)
        fail(ErrorCategory::Format, in.source() + ": unsupported CDNF version " + std::to_string(version)
                                        + " at offset 4 (expected " + std::to_string(kFeatureVersion) + ")");
    FeatureFileHeader h;
    h.length = in.u64("frame count");
    h.feature_dim = in.u64("feature dimension");
    if (h.length == 0 || h.feature_dim == 0)
        fail(ErrorCategory::Format, in.source() + ": header declares " + std::to_string(h.length) + " frames of width "
                                        + std::to_string(h.feature_dim) + "; both must be positive");
    return h;
}

inline Matrix decode_feature_file(std::string_view data, const std::string& source)
{
    io::ByteReader in(data, source);
    const auto h = read_feature_header(in);
    const auto max_values = (std::uint64_t{1} << 60) / 4;
    if (h.length > max_values / h.feature_dim)
        fail(ErrorCategory::Format, source + ": implausible header dimensions");
    const std::uint64_t expected = 4 * h.length * h.feature_dim;
    if (in.remaining() != expected)
        fail(ErrorCategory::Format,
             source + ": payload is " + std::to_string(in.remaining()) + " bytes but the header promises "
                 + std::to_string(expected) + " (" + std::to_string(h.length) + " x " + std::to_string(h.feature_dim)
                 + " float32); expected file size " + std::to_string(kFeatureHeaderBytes + expected) + ", actual "
                 + std::to_string(in.size()));
    Matrix m(static_cast<Eigen::Index>(h.length), static_cast<Eigen::Index>(h.feature_dim));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const std::size_t at = in.offset();
            const float v = in.f32("feature value");
            if (!std::isfinite(v))
                fail(ErrorCategory::Format, source + ": non-finite value at offset " + std::to_string(at) + " (frame "
                                                + std::to_string(r) + ", dim " + std::to_string(c) + ")");
            m(r, c) = static_cast<double>(v);
        }
    }
    return m;
}

inline void write_feature_file(const std::filesystem::path& path, const Matrix& features)
{
    io::write_file(path, encode_feature_file(features));
}

/// Loads a CDNF file. video_id is the file stem; the label is left empty
/// (labels live in the manifest).
inline FeatureSequence load_feature_file(const std::filesystem::path& path)
{
    const std::string data = io::read_file(path);
    return {path.stem().string(), {}, decode_feature_file(data, path.string())};
}

/// Reads and validates only the header of a CDNF file.
inline FeatureFileHeader peek_feature_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::Io, "cannot open " + path.string());
    std::string head(kFeatureHeaderBytes, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    io::ByteReader reader(head, path.string());
    return read_feature_header(reader);
}

// ---------------------------------------------------------------------------
// Manifest text format (tab separated):
//
//   #CDNM<TAB>version=1<TAB>feature_dim=<N_u><TAB>classes=<l1>,<l2>,...
//   # key=value                      (optional metadata lines)
//   <video_id><TAB><relative path><TAB><label>
//
// Paths are relative to the manifest's directory.

struct ManifestEntry {
    std::string video_id;
    std::filesystem::path path;
    std::string label;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_set;
    std::size_t feature_dim = 0;
    std::filesystem::path base_dir;
    std::vector<std::pair<std::string, std::string>> metadata;

    [[nodiscard]] std::size_t label_index(const std::string& label) const
    {
        const auto it = std::find(class_set.begin(), class_set.end(), label);
        if (it == class_set.end()) fail(ErrorCategory::Format, "label \"" + label + "\" is not in the class set");
        return static_cast<std::size_t>(it - class_set.begin());
    }

    [[nodiscard]] std::filesystem::path resolve(const ManifestEntry& e) const
    {
        return e.path.is_absolute() ? e.path : base_dir / e.path;
    }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t begin = 0;
    for (;;) {
        const auto pos = s.find(sep, begin);
        out.emplace_back(s.substr(begin, pos - begin));
        if (pos == std::string_view::npos) break;
        begin = pos + 1;
    }
    return out;
}

inline std::uint64_t parse_u64(std::string_view s, const std::string& what)
{
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty())
        fail(ErrorCategory::Format, what + ": expected an unsigned integer, got \"" + std::string(s) + "\"");
    return v;
}

inline bool is_valid_token(std::string_view s)
{
    return !s.empty() && s.find_first_of("\t\n\r,") == std::string_view::npos;
}

} // namespace detail

inline void validate(const DatasetManifest& manifest)
{
    require(manifest.feature_dim >= 1, ErrorCategory::Format, "manifest feature_dim must be positive");
    require(!manifest.class_set.empty(), ErrorCategory::Format, "manifest has no classes");
    std::set<std::string> classes;
    for (const auto& c : manifest.class_set) {
        require(detail::is_valid_token(c), ErrorCategory::Format, "invalid class label \"" + c + "\"");
        require(classes.insert(c).second, ErrorCategory::Format, "duplicate class label \"" + c + "\"");
    }
    std::set<std::string> ids;
    for (const auto& e : manifest.entries) {
        require(detail::is_valid_token(e.video_id) && e.video_id.find(' ') == std::string::npos,
                ErrorCategory::Format, "invalid video id \"" + e.video_id + "\"");
        require(ids.insert(e.video_id).second, ErrorCategory::Format, "duplicate video id \"" + e.video_id + "\"");
        require(classes.count(e.label) == 1, ErrorCategory::Format,
                "video " + e.video_id + " has label \"" + e.label + "\" outside the class set");
    }
}

inline DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                      const std::string& source = "manifest")
{
    DatasetManifest m;
    m.base_dir = base_dir;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        auto end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(begin, end - begin);
        begin = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string where = source + ":" + std::to_string(line_no);
        if (!have_header) {
            if (line.empty()) continue;
            const auto fields = detail::split(line, '\t');
            if (fields.front() != "#CDNM") fail(ErrorCategory::Format, where + ": missing #CDNM header line");
            bool have_dim = false, have_classes = false;
            for (std::size_t i = 1; i < fields.size(); ++i) {
                const auto eq = fields[i].find('=');
                if (eq == std::string::npos) fail(ErrorCategory::Format, where + ": header field without '='");
                const auto key = fields[i].substr(0, eq);
                const auto value = fields[i].substr(eq + 1);
                if (key == "version") {
                    if (detail::parse_u64(value, where) != 1)
                        fail(ErrorCategory::Format, where + ": unsupported manifest version " + value);
                } else if (key == "feature_dim") {
                    m.feature_dim = detail::parse_u64(value, where + " feature_dim");
                    have_dim = true;
                } else if (key == "classes") {
                    m.class_set = detail::split(value, ',');
                    have_classes = true;
                } else {
                    m.metadata.emplace_back(key, value);
                }
            }
            if (!have_dim || !have_classes)
                fail(ErrorCategory::Format, where + ": header needs feature_dim= and classes=");
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        if (line.front() == '#') {
            auto body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq != std::string_view::npos)
                m.metadata.emplace_back(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
            continue;
        }
        const auto fields = detail::split(line, '\t');
        if (fields.size() != 3)
            fail(ErrorCategory::Format, where + ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
        m.entries.push_back({fields[0], std::filesystem::path(fields[1]), fields[2]});
    }
    if (!have_header) fail(ErrorCategory::Format, source + ": empty manifest");
    validate(m);
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path)
{
    const std::string text = io::read_file(path);
    return parse_manifest(text, path.parent_path(), path.string());
}

inline std::string format_manifest(const DatasetManifest& m)
{
    validate(m);
    std::ostringstream out;
    out << "#CDNM\tversion=1\tfeature_dim=" << m.feature_dim << "\tclasses=";
    for (std::size_t i = 0; i < m.class_set.size(); ++i) out << (i ? "," : "") << m.class_set[i];
    out << '\n';
    for (const auto& [k, v] : m.metadata) out << "# " << k << '=' << v << '\n';
    for (const auto& e : m.entries) out << e.video_id << '\t' << e.path.generic_string() << '\t' << e.label << '\n';
    return out.str();
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m)
{
    io::write_file(path, format_manifest(m));
}

/// Checks that every referenced file exists and declares the manifest's width.
inline void validate_manifest_files(const DatasetManifest& m)
{
    for (const auto& e : m.entries) {
        const auto path = m.resolve(e);
        try {
            const auto h = peek_feature_file(path);
            if (h.feature_dim != m.feature_dim)
                fail(ErrorCategory::Format, path.string() + " has width " + std::to_string(h.feature_dim)
                                                + " but the manifest declares " + std::to_string(m.feature_dim));
        } catch (const Error& err) {
            throw Error(err.category(), "video " + e.video_id + ": " + err.what());
        }
    }
}

/// Loads every manifest entry, attaching id and label. Failures name the video.
inline std::vector<FeatureSequence> load_dataset(const DatasetManifest& m)
{
    std::vector<FeatureSequence> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        try {
            auto seq = load_feature_file(m.resolve(e));
            if (seq.feature_dim() != m.feature_dim)
                fail(ErrorCategory::Format, "width " + std::to_string(seq.feature_dim()) + " but the manifest declares "
                                                + std::to_string(m.feature_dim));
            seq.video_id = e.video_id;
            seq.label = e.label;
            out.push_back(std::move(seq));
        } catch (const Error& err) {
            throw Error(err.category(), "video " + e.video_id + ": " + err.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Trailing zero padding or truncation to exactly target_len frames.
inline FeatureSequence fit_length(const FeatureSequence& seq, std::size_t target_len)
{
    require(target_len >= 1, ErrorCategory::Config, "target length must be at least 1");
    FeatureSequence out{seq.video_id, seq.label, Matrix::Zero(static_cast<Eigen::Index>(target_len), seq.features.cols())};
    const auto keep = static_cast<Eigen::Index>(std::min(target_len, seq.length()));
    out.features.topRows(keep) = seq.features.topRows(keep);
    return out;
}

/// Per-dimension standardisation statistics over every frame of a dataset.
struct Standardizer {
    Vector mean;
    Vector scale; // 1 / std, or 1 where a dimension is constant

    static Standardizer fit(const std::vector<FeatureSequence>& data)
    {
        require(!data.empty(), ErrorCategory::Config, "cannot standardise an empty dataset");
        const Eigen::Index d = data.front().features.cols();
        Vector sum = Vector::Zero(d), sq = Vector::Zero(d);
        double count = 0.0;
        for (const auto& s : data) {
            sum += s.features.colwise().sum().transpose();
            count += static_cast<double>(s.features.rows());
        }
        Standardizer st{sum / count, Vector::Ones(d)};
        for (const auto& s : data) sq += (s.features.rowwise() - st.mean.transpose()).array().square().colwise().sum().matrix().transpose();
        for (Eigen::Index j = 0; j < d; ++j) {
            const double sd = std::sqrt(sq(j) / count);
            if (sd > 0.0) st.scale(j) = 1.0 / sd;
        }
        return st;
    }

    [[nodiscard]] Matrix apply(const Matrix& features) const
    {
        return ((features.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array()).matrix();
    }
};

// ---------------------------------------------------------------------------

struct SplitPlan {
    std::size_t replication_index = 0;
    std::uint64_t seed = 0;
    /// Row indices into the manifest entry list, ascending.
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Per class with m videos: shuffle under a seed derived from
/// (base_seed, replication_index), put the first floor(m/2) in train and the
/// remaining ceil(m/2) in test.
inline SplitPlan stratified_split(const DatasetManifest& manifest, std::size_t replication_index,
                                  std::uint64_t base_seed)
{
    SplitPlan plan;
    plan.replication_index = replication_index;
    plan.seed = derive_seed(base_seed, replication_index);
    std::vector<std::vector<std::size_t>> by_class(manifest.class_set.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        by_class[manifest.label_index(manifest.entries[i].label)].push_back(i);

    Rng rng(plan.seed);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& rows = by_class[c];
        require(!rows.empty(), ErrorCategory::Config, "class \"" + manifest.class_set[c] + "\" has no videos");
        rng.shuffle(std::span<std::size_t>(rows));
        const std::size_t n_train = rows.size() / 2;
        plan.train_rows.insert(plan.train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        plan.test_rows.insert(plan.test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    std::sort(plan.train_rows.begin(), plan.train_rows.end());
    std::sort(plan.test_rows.begin(), plan.test_rows.end());
    for (const auto r : plan.train_rows) plan.train_ids.push_back(manifest.entries[r].video_id);
    for (const auto r : plan.test_rows) plan.test_ids.push_back(manifest.entries[r].video_id);
    return plan;
}

} // namespace cdn

#include "cdn/dataset.hpp"
#include "cdn/readout.hpp"
#include "cdn/synth.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>

namespace cdn {
namespace {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("cdn_test_" + name))
    {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// Independent byte layout for the header, little-endian by construction.
std::string raw_header(std::uint64_t tau, std::uint64_t n_u, std::uint8_t version = 1)
{
    std::string s = "CDNF";
    s.push_back(static_cast<char>(version));
    for (const auto v : {tau, n_u})
        for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    return s;
}

void append_f32(std::string& s, float f)
{
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::string expect_error(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected an error";
    return {};
}

DatasetManifest counted_manifest(const std::vector<std::size_t>& per_class)
{
    DatasetManifest m;
    m.feature_dim = 4;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        m.class_set.push_back("c" + std::to_string(c));
        for (std::size_t v = 0; v < per_class[c]; ++v) {
            const auto id = "c" + std::to_string(c) + "_" + std::to_string(v);
            m.entries.push_back({id, id + ".cdnf", m.class_set.back()});
        }
    }
    return m;
}

TEST(FeatureFile, DecodesRowMajorPayload)
{
    std::string bytes = raw_header(2, 3);
    for (const float f : {1.f, 2.f, 3.f, 4.f, 5.f, 6.f}) append_f32(bytes, f);
    const Matrix m = decode_feature_file(bytes, "mem");
    ASSERT_EQ(m.rows(), 2);
    ASSERT_EQ(m.cols(), 3);
    EXPECT_EQ(m(0, 2), 3.0);
    EXPECT_EQ(m(1, 0), 4.0);
    EXPECT_EQ(encode_feature_file(m), bytes);
}

TEST(FeatureFile, TruncatedPayloadNamesByteCounts)
{
    std::string bytes = raw_header(2, 3);
    for (const float f : {1.f, 2.f, 3.f, 4.f, 5.f}) append_f32(bytes, f);
    const auto msg = expect_error([&] { decode_feature_file(bytes, "clip.cdnf"); });
    EXPECT_NE(msg.find("24"), std::string::npos) << msg;
    EXPECT_NE(msg.find("20"), std::string::npos) << msg;
    EXPECT_NE(msg.find("clip.cdnf"), std::string::npos) << msg;
}

TEST(FeatureFile, RejectsBadMagicVersionAndNonFinite)
{
    std::string ok = raw_header(1, 1);
    append_f32(ok, 0.5f);
    auto bad_magic = ok;
    bad_magic[1] = 'X';
    EXPECT_THROW(decode_feature_file(bad_magic, "mem"), Error);
    std::string bad_version = raw_header(1, 1, 2);
    append_f32(bad_version, 0.5f);
    EXPECT_THROW(decode_feature_file(bad_version, "mem"), Error);
    std::string nan = raw_header(1, 2);
    append_f32(nan, 0.0f);
    append_f32(nan, std::numeric_limits<float>::quiet_NaN());
    const auto msg = expect_error([&] { decode_feature_file(nan, "mem"); });
    EXPECT_NE(msg.find("25"), std::string::npos) << msg; // byte offset of the NaN
    EXPECT_THROW(decode_feature_file(ok + "x", "mem"), Error);
    EXPECT_THROW(decode_feature_file(raw_header(0, 3), "mem"), Error);
}

TEST(FeatureFile, RoundTripsBitExactly)
{
    TempDir dir("cdnf");
    Rng rng(11);
    for (const Eigen::Index tau : {1, 160, 500}) {
        Matrix m(tau, 7);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
        const auto path = dir.path() / ("t" + std::to_string(tau) + ".cdnf");
        write_feature_file(path, m);
        const auto seq = load_feature_file(path);
        EXPECT_TRUE(seq.features == m) << tau;
        EXPECT_EQ(seq.video_id, "t" + std::to_string(tau));
        const auto h = peek_feature_file(path);
        EXPECT_EQ(h.length, static_cast<std::uint64_t>(tau));
        EXPECT_EQ(h.feature_dim, 7u);
    }
    EXPECT_THROW(load_feature_file(dir.path() / "missing.cdnf"), Error);
}

TEST(FitLength, PadsTruncatesAndIsIdempotent)
{
    const FeatureSequence shorter{"a", "x", Matrix::Ones(100, 3)};
    const auto padded = fit_length(shorter, 160);
    ASSERT_EQ(padded.length(), 160u);
    EXPECT_TRUE(padded.features.topRows(100).isOnes(0.0));
    EXPECT_TRUE(padded.features.bottomRows(60).isZero(0.0));
    EXPECT_EQ(padded.video_id, "a");

    Matrix ramp(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) ramp.row(i).setConstant(static_cast<double>(i));
    const auto cut = fit_length(FeatureSequence{"b", "y", ramp}, 160);
    EXPECT_TRUE(cut.features == ramp.topRows(160));

    EXPECT_TRUE(fit_length(padded, 160).features == padded.features);
    EXPECT_TRUE(fit_length(cut, 160).features == cut.features);
    EXPECT_THROW(fit_length(shorter, 0), Error);
}

TEST(Standardizer, ZeroMeanUnitVariance)
{
    Rng rng(2);
    std::vector<FeatureSequence> data;
    for (int v = 0; v < 3; ++v) {
        Matrix m(10 + v, 2);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            m(i, 0) = 5.0 + 2.0 * rng.normal();
            m(i, 1) = 7.0; // constant dimension passes through centred
        }
        data.push_back({"v", "c", m});
    }
    const auto st = Standardizer::fit(data);
    Matrix all(33, 2);
    Eigen::Index r = 0;
    for (const auto& s : data) {
        all.middleRows(r, s.features.rows()) = st.apply(s.features);
        r += s.features.rows();
    }
    EXPECT_NEAR(all.col(0).mean(), 0.0, 1e-12);
    EXPECT_NEAR(all.col(0).squaredNorm() / 33.0, 1.0, 1e-12);
    EXPECT_TRUE(all.col(1).isZero(0.0));
}

TEST(Manifest, ParsesHeaderMetadataAndEntries)
{
    const std::string text =
        "#CDNM\tversion=1\tfeature_dim=16\tclasses=walk,sniff\n"
        "# source=test\n"
        "\n"
        "v1\tfeatures/v1.cdnf\twalk\r\n"
        "v2\tfeatures/v2.cdnf\tsniff\n";
    const auto m = parse_manifest(text, "/data");
    EXPECT_EQ(m.feature_dim, 16u);
    EXPECT_EQ(m.class_set, (std::vector<std::string>{"walk", "sniff"}));
    ASSERT_EQ(m.entries.size(), 2u);
    EXPECT_EQ(m.entries[1].label, "sniff");
    EXPECT_EQ(m.resolve(m.entries[0]), fs::path("/data/features/v1.cdnf"));
    EXPECT_EQ(m.label_index("sniff"), 1u);
    ASSERT_EQ(m.metadata.size(), 1u);
    EXPECT_EQ(m.metadata[0].second, "test");

    const auto again = parse_manifest(format_manifest(m), "/data");
    EXPECT_EQ(format_manifest(again), format_manifest(m));
}

TEST(Manifest, RejectsMalformedInput)
{
    const std::string header = "#CDNM\tversion=1\tfeature_dim=4\tclasses=a,b\n";
    EXPECT_THROW(parse_manifest("", "."), Error);
    EXPECT_THROW(parse_manifest("v\tp\ta\n", "."), Error);
    EXPECT_THROW(parse_manifest("#CDNM\tversion=2\tfeature_dim=4\tclasses=a\n", "."), Error);
    EXPECT_THROW(parse_manifest("#CDNM\tversion=1\tclasses=a\n", "."), Error);
    EXPECT_THROW(parse_manifest(header + "v\tp\n", "."), Error);
    EXPECT_THROW(parse_manifest(header + "v\tp\tz\n", "."), Error);
    EXPECT_THROW(parse_manifest(header + "v\tp\ta\nv\tq\tb\n", "."), Error);
    EXPECT_THROW(parse_manifest("#CDNM\tversion=1\tfeature_dim=4\tclasses=a,a\n", "."), Error);
    const auto msg = expect_error([&] { parse_manifest(header + "v\tp\ta\nbroken\n", ".", "m.tsv"); });
    EXPECT_NE(msg.find("m.tsv:3"), std::string::npos) << msg;
}

TEST(Manifest, LoadDatasetAttachesIdsAndChecksWidth)
{
    TempDir dir("manifest");
    SynthSpec s;
    s.classes = 2;
    s.per_class = 3;
    s.feature_dim = 4;
    s.length = 12;
    const auto written = write_synth_dataset(s, dir.path());
    const auto m = load_manifest(dir.path() / "manifest.tsv");
    EXPECT_NO_THROW(validate_manifest_files(m));
    const auto data = load_dataset(m);
    ASSERT_EQ(data.size(), 6u);
    EXPECT_EQ(data[4].video_id, "class01_v001");
    EXPECT_EQ(data[4].label, "class01");
    EXPECT_EQ(data[4].length(), 12u);

    write_feature_file(dir.path() / "features" / "class00_v002.cdnf", Matrix::Zero(12, 5));
    const auto msg = expect_error([&] { load_dataset(m); });
    EXPECT_NE(msg.find("class00_v002"), std::string::npos) << msg;
    EXPECT_THROW(validate_manifest_files(m), Error);
}

TEST(StratifiedSplit, FloorCeilRule)
{
    const auto m = counted_manifest({21, 2, 1, 7});
    const auto plan = stratified_split(m, 0, 42);
    std::vector<std::size_t> train(4, 0), test(4, 0);
    for (const auto r : plan.train_rows) ++train[m.label_index(m.entries[r].label)];
    for (const auto r : plan.test_rows) ++test[m.label_index(m.entries[r].label)];
    EXPECT_EQ(train, (std::vector<std::size_t>{10, 1, 0, 3}));
    EXPECT_EQ(test, (std::vector<std::size_t>{11, 1, 1, 4}));
}

TEST(StratifiedSplit, DeterministicDisjointAndCovering)
{
    const auto m = counted_manifest({9, 10, 11});
    const auto a = stratified_split(m, 3, 7);
    const auto b = stratified_split(m, 3, 7);
    EXPECT_EQ(a.train_rows, b.train_rows);
    EXPECT_EQ(a.test_ids, b.test_ids);
    EXPECT_NE(stratified_split(m, 4, 7).train_rows, a.train_rows);
    EXPECT_NE(stratified_split(m, 3, 8).train_rows, a.train_rows);
    for (std::size_t r = 0; r < 20; ++r) {
        const auto p = stratified_split(m, r, 1);
        std::set<std::size_t> all(p.train_rows.begin(), p.train_rows.end());
        for (const auto t : p.test_rows) EXPECT_TRUE(all.insert(t).second);
        EXPECT_EQ(all.size(), m.entries.size());
    }
}

TEST(StratifiedSplit, EmptyClassIsAnError)
{
    EXPECT_THROW(stratified_split(counted_manifest({3, 0, 2}), 0, 0), Error);
}

TEST(Synth, FrequenciesAreDistinct)
{
    SynthSpec s;
    EXPECT_EQ(synth_frequency(s, 0), 1u);
    EXPECT_EQ(synth_frequency(s, 4), 21u);
    s.classes = 10;
    s.length = 22;
    std::set<std::size_t> f;
    for (std::size_t c = 0; c < 10; ++c) f.insert(synth_frequency(s, c));
    EXPECT_EQ(f.size(), 10u);
    EXPECT_LT(*f.rbegin(), 11u);
}

TEST(Synth, SeededAndMeanMatched)
{
    for (const auto pattern : {SynthPattern::Frequency, SynthPattern::Bump}) {
        SynthSpec s;
        s.pattern = pattern;
        s.per_class = 3;
        s.seed = 5;
        const auto a = synth_generate(s);
        const auto b = synth_generate(s);
        ASSERT_EQ(a.size(), 15u);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].features == b[i].features);
        for (std::size_t c = 0; c < s.classes; ++c)
            EXPECT_LE(synth_template(s, c).colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
        s.seed = 6;
        EXPECT_FALSE(synth_generate(s)[0].features == a[0].features);
    }
}

TEST(Synth, NoiselessNearestTemplateIsExact)
{
    SynthSpec s;
    s.noise = 0.0;
    s.jitter = 0.0;
    s.per_class = 4;
    const auto data = synth_generate(s);
    std::size_t hits = 0;
    for (const auto& seq : data) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < s.classes; ++c) {
            const double d = (seq.features - synth_template(s, c)).norm();
            if (d < best_d) best_d = d, best = c;
        }
        hits += synth_class_label(best) == seq.label;
    }
    EXPECT_EQ(hits, data.size());
}

TEST(Synth, RejectsDegenerateSpecs)
{
    SynthSpec s;
    s.length = 1;
    EXPECT_THROW(synth_generate(s), Error);
    s.length = 11; // frequency pattern with 5 classes needs 12
    EXPECT_THROW(synth_generate(s), Error);
    s.pattern = SynthPattern::Bump;
    EXPECT_NO_THROW(synth_template(s, 0));
    s.classes = 1;
    EXPECT_THROW(synth_generate(s), Error);
}

TEST(Synth, PooledRawInputIsAtChance)
{
    SynthSpec s;
    s.per_class = 200;
    s.seed = 13;
    const auto data = synth_generate(s);
    DatasetManifest m = synth_manifest(s, data, ".");
    Matrix rows(static_cast<Eigen::Index>(data.size()), 1 + 16);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
        rows(static_cast<Eigen::Index>(i), 0) = 1.0;
        rows.row(static_cast<Eigen::Index>(i)).tail(16) = data[i].features.colwise().mean();
        labels.push_back(m.label_index(data[i].label));
    }
    const auto plan = stratified_split(m, 0, 1);
    std::vector<std::size_t> train_y, test_y;
    for (const auto r : plan.train_rows) train_y.push_back(labels[r]);
    for (const auto r : plan.test_rows) test_y.push_back(labels[r]);
    const Matrix train = detail::gather_rows(rows, plan.train_rows);
    const Matrix test = detail::gather_rows(rows, plan.test_rows);
    TrainSpec spec;
    const auto model = train_softmax(train, train_y, m.class_set, spec).model;
    EXPECT_NEAR(accuracy(model.w_out, test, test_y), 0.2, 0.05);
}

} // namespace
} // namespace cdn

#pragma once

// CDNW readout weights file:
//
//   "CDNW" | version u8 | N_y u64 | D u64 | N_y*D float64, row-major
//   [ optional label trailer: N_y x (length u64 | UTF-8 bytes) ]
//
// The trailer carries class_labels. Files without it load with labels
// "0", "1", ... so the core layout stays readable on its own.

#include "cdn/binary_io.hpp"
#include "cdn/error.hpp"
#include "cdn/readout.hpp"

#include <filesystem>
#include <string>

namespace cdn {

inline constexpr std::string_view kModelMagic = "CDNW";
inline constexpr std::uint8_t kModelVersion = 1;

inline std::string encode_model(const ReadoutModel& model, bool with_labels = true)
{
    validate(model);
    std::string out;
    out.append(kModelMagic);
    out.push_back(static_cast<char>(kModelVersion));
    io::put_u64(out, static_cast<std::uint64_t>(model.w_out.rows()));
    io::put_u64(out, static_cast<std::uint64_t>(model.w_out.cols()));
    for (Eigen::Index r = 0; r < model.w_out.rows(); ++r)
        for (Eigen::Index c = 0; c < model.w_out.cols(); ++c) io::put_f64(out, model.w_out(r, c));
    if (with_labels)
        for (const auto& l : model.class_labels) io::put_string(out, l);
    return out;
}

inline ReadoutModel decode_model(std::string_view data, const std::string& source)
{
    io::ByteReader in(data, source);
    in.expect_magic(kModelMagic);
    const auto version = in.u8("version");
    if (version != kModelVersion)
        fail(ErrorCategory::Format, source + ": unsupported CDNW version " + std::to_string(version));
    const auto rows = in.u64("N_y");
    const auto cols = in.u64("column count");
    if (rows == 0 || cols == 0 || rows > (std::uint64_t{1} << 32) || cols > (std::uint64_t{1} << 32))
        fail(ErrorCategory::Format, source + ": implausible dimensions " + std::to_string(rows) + " x " + std::to_string(cols));
    const std::uint64_t payload = 8 * rows * cols;
    if (in.remaining() < payload)
        fail(ErrorCategory::Format, source + ": weight payload needs " + std::to_string(payload) + " bytes, file has "
                                        + std::to_string(in.remaining()) + " after the header");
    ReadoutModel model;
    model.w_out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < model.w_out.rows(); ++r)
        for (Eigen::Index c = 0; c < model.w_out.cols(); ++c) model.w_out(r, c) = in.f64("weight");
    if (in.remaining() == 0) {
        for (std::uint64_t i = 0; i < rows; ++i) model.class_labels.push_back(std::to_string(i));
    } else {
        for (std::uint64_t i = 0; i < rows; ++i) model.class_labels.push_back(in.string("class label"));
        if (in.remaining() != 0)
            fail(ErrorCategory::Format, source + ": " + std::to_string(in.remaining()) + " trailing bytes at offset "
                                            + std::to_string(in.offset()));
    }
    return model;
}

inline void save_model(const std::filesystem::path& path, const ReadoutModel& model)
{
    io::write_file(path, encode_model(model));
}

inline ReadoutModel load_model(const std::filesystem::path& path)
{
    return decode_model(io::read_file(path), path.string());
}

} // namespace cdn

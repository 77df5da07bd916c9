#pragma once

// Little-endian byte helpers shared by the CDNF, CDNW and CDNP file formats.

#include "cdn/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace cdn::io {

inline void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_string(std::string& out, std::string_view s)
{
    put_u64(out, s.size());
    out.append(s);
}

/// Bounds-checked cursor over an in-memory file image. Every failure names
/// the byte offset and what was expected there.
class ByteReader {
public:
    ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - pos_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }

    void need(std::size_t bytes, std::string_view what) const
    {
        if (remaining() < bytes)
            fail(ErrorCategory::Format, source_ + ": truncated at offset " + std::to_string(pos_) + " reading "
                                            + std::string(what) + ": need " + std::to_string(bytes)
                                            + " bytes, have " + std::to_string(remaining()));
    }

    std::string_view bytes(std::size_t n, std::string_view what)
    {
        need(n, what);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }

    std::uint64_t u64(std::string_view what)
    {
        const auto b = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    std::uint32_t u32(std::string_view what)
    {
        const auto b = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }
    float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }

    std::string string(std::string_view what)
    {
        const auto n = u64(what);
        if (n > remaining())
            fail(ErrorCategory::Format, source_ + ": string length " + std::to_string(n) + " at offset "
                                            + std::to_string(pos_ - 8) + " exceeds the remaining "
                                            + std::to_string(remaining()) + " bytes");
        return std::string(bytes(static_cast<std::size_t>(n), what));
    }

    void expect_magic(std::string_view magic)
    {
        need(magic.size(), "magic");
        const auto got = bytes(magic.size(), "magic");
        if (got != magic)
            fail(ErrorCategory::Format, source_ + ": bad magic at offset 0: expected \"" + std::string(magic) + "\"");
    }

private:
    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::Io, "cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCategory::Io, "error reading " + path.string());
    return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view data)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::Io, "cannot open " + path.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCategory::Io, "error writing " + path.string());
}

} // namespace cdn::io

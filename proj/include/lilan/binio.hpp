#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lilan/error.hpp"

namespace lilan::binio {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written in native little-endian order");

/// Append-only little-endian byte buffer.
class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void f64s(std::span<const double> v) { bytes(v.data(), v.size_bytes()); }

    [[nodiscard]] const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
    void write_file(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every short read throws CorruptPayload.
class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
    static Reader from_file(const std::filesystem::path& path);

    void bytes(void* out, std::size_t n) {
        if (n > buf_.size() - pos_)
            fail(ErrorKind::CorruptPayload,
                 "truncated payload: need " + std::to_string(n) + " bytes at offset " +
                     std::to_string(pos_) + ", have " + std::to_string(buf_.size() - pos_));
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
    double f64() { double v; bytes(&v, sizeof v); return v; }
    void f64s(std::span<double> out) { bytes(out.data(), out.size_bytes()); }

    [[nodiscard]] std::size_t remaining() const noexcept { return buf_.size() - pos_; }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

}  // namespace lilan::binio

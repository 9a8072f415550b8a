#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

#include "ape/error.hpp"

// Little-endian byte packing independent of host order.
namespace ape::binio {

class Writer {
public:
    void bytes(std::string_view raw) { buffer_.append(raw); }

    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((x >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t x) {
        for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((x >> (8 * i)) & 0xFFu));
    }
    void f32(float x) { u32(std::bit_cast<std::uint32_t>(x)); }
    void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
    void f64s(std::span<const double> xs) {
        for (double x : xs) f64(x);
    }

    const std::string& str() const noexcept { return buffer_; }

private:
    std::string buffer_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= std::uint32_t{byte_at(pos_ + i)} << (8 * i);
        pos_ += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= std::uint64_t{byte_at(pos_ + i)} << (8 * i);
        pos_ += 8;
        return x;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(std::span<double> out) {
        need(out.size() * 8);
        for (double& x : out) x = f64();
    }

private:
    unsigned char byte_at(std::size_t i) const noexcept {
        return static_cast<unsigned char>(data_[i]);
    }
    void need(std::size_t n) const {
        require(n <= data_.size() - pos_, ErrorKind::Truncated,
                "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                    ", only " + std::to_string(data_.size() - pos_) + " remain");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

/// 64-bit FNV-1a, used for frozen-tensor fingerprints.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void update(std::span<const double> xs) noexcept {
        for (double x : xs) {
            const auto bits = std::bit_cast<std::uint64_t>(x);
            update(&bits, sizeof bits);
        }
    }
    std::uint64_t digest() const noexcept { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace ape::binio

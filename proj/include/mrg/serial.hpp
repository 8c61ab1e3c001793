#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mrg/common.hpp"

namespace mrg {

/// Little-endian binary writer; byte layout is explicit so archives are
/// identical across hosts.
class BinWriter {
public:
    explicit BinWriter(const std::string& path)
        : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw IoError(strf("cannot open %s for writing", path.c_str()));
    }

    void u8(uint8_t v) { raw(&v, 1); }

    void u32(uint32_t v) {
        uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        raw(b, 4);
    }

    void u64(uint64_t v) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        raw(b, 8);
    }

    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }

    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    void close() {
        out_.close();
        if (!out_) throw IoError(strf("write to %s failed", path_.c_str()));
    }

private:
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError(strf("write to %s failed", path_.c_str()));
    }

    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path)
        : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError(strf("cannot open %s for reading", path.c_str()));
    }

    uint8_t u8() {
        uint8_t v;
        raw(&v, 1);
        return v;
    }

    uint32_t u32() {
        uint8_t b[4];
        raw(b, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    }

    uint64_t u64() {
        uint8_t b[8];
        raw(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }

    int64_t i64() { return static_cast<int64_t>(u64()); }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const uint32_t n = u32();
        std::string s(n, '\0');
        if (n) raw(s.data(), n);
        return s;
    }

    std::vector<double> f64_vec() {
        const uint64_t n = u64();
        std::vector<double> v(n);
        for (uint64_t i = 0; i < n; ++i) v[i] = f64();
        return v;
    }

    bool at_end() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw IoError(strf("unexpected end of %s", path_.c_str()));
    }

    std::ifstream in_;
    std::string path_;
};

} // namespace mrg

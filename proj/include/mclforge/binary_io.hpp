#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mclforge/errors.hpp"

namespace mclforge {

/// Little-endian binary writer. Layout is explicit byte-by-byte so files are
/// bit-identical regardless of host endianness.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    void write_magic(const char (&magic)[5]) { out_.write(magic, 4); }

    void write_u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out_.write(b, 4);
    }

    void write_f64(double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, 8);
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out_.write(b, 8);
    }

    void close() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
        out_.close();
    }

private:
    std::string path_;
    std::ofstream out_;
};

/// Little-endian binary reader that tracks its byte offset; every failure
/// throws ParseError carrying the offset where the data ran out or went bad.
class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    std::size_t offset() const { return offset_; }

    void expect_magic(const char (&magic)[5]) {
        char got[4];
        read_bytes(got, 4, "magic");
        if (std::memcmp(got, magic, 4) != 0) {
            throw ParseError(std::string("bad magic, expected \"") + magic + "\"", 0);
        }
    }

    std::uint32_t read_u32(const char* what) {
        char b[4];
        read_bytes(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        }
        return v;
    }

    double read_f64(const char* what) {
        char b[8];
        read_bytes(b, 8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        }
        double v = 0.0;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void read_f64_array(std::vector<double>& dst, std::size_t n, const char* what) {
        dst.resize(n);
        for (std::size_t i = 0; i < n; ++i) dst[i] = read_f64(what);
    }

    void expect_eof() {
        char c;
        in_.read(&c, 1);
        if (!in_.eof()) {
            throw ParseError("trailing bytes after end of data", offset_);
        }
    }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;

    void read_bytes(char* dst, std::size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw ParseError(std::string("truncated file while reading ") + what,
                             offset_ + static_cast<std::size_t>(in_.gcount()));
        }
        offset_ += n;
    }
};

}  // namespace mclforge

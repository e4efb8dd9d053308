#ifndef SMAL_CODEC_HPP
#define SMAL_CODEC_HPP

#include "smal/features.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smal {

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string base64_encode(std::string_view in) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const std::uint32_t v = (static_cast<std::uint8_t>(in[i]) << 16) | (static_cast<std::uint8_t>(in[i + 1]) << 8) |
                                static_cast<std::uint8_t>(in[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
    }
    if (i < in.size()) {
        std::uint32_t v = static_cast<std::uint8_t>(in[i]) << 16;
        if (i + 1 < in.size()) v |= static_cast<std::uint8_t>(in[i + 1]) << 8;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += i + 1 < in.size() ? table[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

/// 8-bit RGB PNG, no interlacing, zlib-compressed scanlines with filter 0.
inline std::string encode_png(const Frame& frame) {
    validate(frame);
    std::string raw;
    raw.reserve(static_cast<std::size_t>(frame.height) * (frame.width * 3 + 1));
    for (int y = 0; y < frame.height; ++y) {
        raw += '\0';
        for (int x = 0; x < frame.width; ++x)
            for (int c = 0; c < 3; ++c) raw += static_cast<char>(to_byte(frame.at(x, y, c)));
    }
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(packed_size, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("zlib compression failed");
    packed.resize(packed_size);

    auto be32 = [](std::string& s, std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) s += static_cast<char>((v >> shift) & 0xff);
    };
    std::string out("\x89PNG\r\n\x1a\n", 8);
    auto chunk = [&](std::string_view type, const std::string& data) {
        be32(out, static_cast<std::uint32_t>(data.size()));
        std::string body(type);
        body += data;
        out += body;
        be32(out, static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                                                   static_cast<uInt>(body.size()))));
    };
    std::string ihdr;
    be32(ihdr, static_cast<std::uint32_t>(frame.width));
    be32(ihdr, static_cast<std::uint32_t>(frame.height));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // depth 8, truecolor
    chunk("IHDR", ihdr);
    chunk("IDAT", packed);
    chunk("IEND", {});
    return out;
}

}  // namespace smal

#endif  // SMAL_CODEC_HPP

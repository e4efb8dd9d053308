#ifndef SMAL_DEMONSTRATION_HPP
#define SMAL_DEMONSTRATION_HPP

#include "smal/codec.hpp"
#include "smal/simulator.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

/// Synchronized frame and atom streams; frames[i + 1] was rendered after k_stream[i].
struct Demonstration {
    std::vector<Frame> frames;
    std::vector<Atom> k_stream;
    std::vector<Pose> poses;  // ground-truth pose of each frame
    std::string world_file;
    std::uint64_t seed = 0;
    std::string timestamp;
    bool truncated = false;

    void validate() const {
        if (frames.empty() ? !k_stream.empty() : frames.size() != k_stream.size() + 1)
            throw std::invalid_argument("demonstration must hold one more frame than atoms");
        if (poses.size() != frames.size()) throw std::invalid_argument("demonstration poses do not match frames");
    }
};

/// Accumulates a demonstration while a world is being driven.
class DemoRecorder {
public:
    void start(const SimWorld& w) {
        demo_ = {};
        demo_.seed = w.seed;
        demo_.frames.push_back(render(w));
        demo_.poses.push_back(w.robot);
    }

    void record(Atom atom, const SimWorld& after) {
        demo_.k_stream.push_back(atom);
        demo_.frames.push_back(render(after));
        demo_.poses.push_back(after.robot);
    }

    Demonstration& demo() { return demo_; }
    Demonstration finish(bool truncated = false) {
        demo_.truncated = truncated;
        return std::move(demo_);
    }

private:
    Demonstration demo_;
};

class CorruptFile : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

inline void put_u8(std::string& out, std::uint8_t v) { out += static_cast<char>(v); }

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out += static_cast<char>((u >> (8 * i)) & 0xff);
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::string& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

/// Bounds-checked little-endian reader over a byte buffer.
class Reader {
public:
    explicit Reader(std::string_view data, std::size_t pos = 0) : data_(data), pos_(pos) {}

    std::string_view bytes(std::size_t n) {
        if (n > data_.size() - pos_) throw CorruptFile("unexpected end of file");
        const auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    template <typename T>
    T le() {
        const auto b = bytes(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return static_cast<T>(u);
    }

    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
    std::string str() { return std::string(bytes(le<std::uint32_t>())); }
    bool done() const { return pos_ == data_.size(); }
    std::size_t position() const { return pos_; }

private:
    std::string_view data_;
    std::size_t pos_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace io

inline constexpr char kDemoMagic[8] = {'S', 'M', 'A', 'L', 'D', 'E', 'M', 'O'};
inline constexpr std::uint32_t kDemoVersion = 1;
inline constexpr std::uint8_t kNoAtom = 0xff;

/// Binary demonstration archive; layout in docs/file-formats.md.
inline std::string serialize_demo(const Demonstration& d) {
    d.validate();
    std::string out(kDemoMagic, sizeof(kDemoMagic));
    io::put_le<std::uint32_t>(out, kDemoVersion);
    const int w = d.frames.empty() ? 0 : d.frames.front().width;
    const int h = d.frames.empty() ? 0 : d.frames.front().height;
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.frames.size()));
    io::put_u8(out, d.truncated ? 1 : 0);
    io::put_le<std::uint64_t>(out, d.seed);
    io::put_str(out, d.world_file);
    io::put_str(out, d.timestamp);
    for (std::size_t i = 0; i < d.frames.size(); ++i) {
        const Frame& f = d.frames[i];
        if (f.width != w || f.height != h) throw std::invalid_argument("demonstration frames differ in size");
        io::put_u8(out, i == 0 ? kNoAtom : static_cast<std::uint8_t>(d.k_stream[i - 1]));
        io::put_le<std::int32_t>(out, d.poses[i].x);
        io::put_le<std::int32_t>(out, d.poses[i].y);
        io::put_u8(out, static_cast<std::uint8_t>(d.poses[i].heading));
        for (double v : f.pixels) io::put_u8(out, to_byte(v));
    }
    return out;
}

inline Demonstration deserialize_demo(std::string_view bytes) {
    io::Reader r(bytes);
    if (bytes.size() < sizeof(kDemoMagic) || std::memcmp(bytes.data(), kDemoMagic, sizeof(kDemoMagic)) != 0)
        throw CorruptFile("not a demonstration file");
    r.bytes(sizeof(kDemoMagic));
    const auto version = r.le<std::uint32_t>();
    if (version != kDemoVersion) throw CorruptFile("unsupported demonstration version " + std::to_string(version));
    const auto w = static_cast<int>(r.le<std::uint32_t>());
    const auto h = static_cast<int>(r.le<std::uint32_t>());
    const auto count = r.le<std::uint32_t>();
    Demonstration d;
    d.truncated = r.u8() != 0;
    d.seed = r.le<std::uint64_t>();
    d.world_file = r.str();
    d.timestamp = r.str();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t atom = r.u8();
        if (i == 0 ? atom != kNoAtom : atom > 3) throw CorruptFile("invalid atom code in step " + std::to_string(i));
        if (i > 0) d.k_stream.push_back(static_cast<Atom>(atom));
        Pose p;
        p.x = r.le<std::int32_t>();
        p.y = r.le<std::int32_t>();
        const std::uint8_t heading = r.u8();
        if (heading > 3) throw CorruptFile("invalid heading in step " + std::to_string(i));
        p.heading = static_cast<Heading>(heading);
        d.poses.push_back(p);
        Frame f(w, h);
        const auto px = r.bytes(f.pixels.size());
        for (std::size_t k = 0; k < px.size(); ++k) f.pixels[k] = static_cast<std::uint8_t>(px[k]) / 255.0;
        d.frames.push_back(std::move(f));
    }
    if (!r.done()) throw CorruptFile("trailing bytes after demonstration");
    return d;
}

inline void save_demo(const Demonstration& d, const std::filesystem::path& path) {
    io::write_file(path, serialize_demo(d));
}

inline Demonstration load_demo(const std::filesystem::path& path) { return deserialize_demo(io::read_file(path)); }

/// Every *.demo file in a directory, in lexicographic path order.
inline std::vector<Demonstration> load_demo_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".demo") paths.push_back(entry.path());
    std::ranges::sort(paths);
    std::vector<Demonstration> out;
    for (const auto& p : paths) out.push_back(load_demo(p));
    return out;
}

}  // namespace smal

#endif  // SMAL_DEMONSTRATION_HPP

#include "mirage/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

namespace mirage::io {
namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    Bytes take() { return std::move(out_); }
    const Bytes& bytes() const { return out_; }

private:
    Bytes out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw CorruptArtifact(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++] << (8 * i));
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in pieces.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, std::numeric_limits<uInt>::max()));
        crc = ::crc32(crc, bytes.data() + pos, n);
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

Bytes encode_checkpoint(const NamedTensors& tensors) {
    if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("checkpoint: too many tensors");
    std::set<std::string> names;
    Writer w;
    w.raw("MIRG");
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (!names.insert(name).second) throw std::invalid_argument("checkpoint: duplicate tensor name '" + name + "'");
        if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
            throw std::invalid_argument("checkpoint: bad tensor name length");
        if (t.rank() > 255) throw std::invalid_argument("checkpoint: rank too large for '" + name + "'");
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.raw(name);
        w.u8(0);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            if (d > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("checkpoint: dimension too large");
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (float v : t.data()) w.f32(v);
    }
    w.u32(crc32(w.bytes()));
    return w.take();
}

NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4) throw CorruptArtifact("checkpoint: file too short");
    const auto body = bytes.first(bytes.size() - 4);
    Reader tail(bytes.last(4), "checkpoint");
    const std::uint32_t stored = tail.u32();
    if (crc32(body) != stored) throw CorruptArtifact("checkpoint: CRC mismatch");

    Reader r(body, "checkpoint");
    if (r.raw(4) != "MIRG") throw CorruptArtifact("checkpoint: bad magic");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) throw CorruptArtifact("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    NamedTensors out;
    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = r.u16();
        std::string name = r.raw(len);
        if (name.empty() || !names.insert(name).second) throw CorruptArtifact("checkpoint: empty or duplicate tensor name");
        const std::uint8_t dtype = r.u8();
        if (dtype != 0) throw CorruptArtifact("checkpoint: unknown dtype " + std::to_string(dtype) + " for '" + name + "'");
        const std::uint8_t rank = r.u8();
        ad::Shape shape;
        std::size_t numel = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            shape.push_back(r.u32());
            numel *= shape.back();
        }
        if (numel > r.remaining() / 4) throw CorruptArtifact("checkpoint: tensor '" + name + "' exceeds file size");
        std::vector<float> data(numel);
        for (auto& v : data) v = r.f32();
        out.emplace_back(std::move(name), ad::Tensor<float>(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0) throw CorruptArtifact("checkpoint: trailing bytes");
    return out;
}

ImageSample quantize_pixels(const ImageSample& sample) {
    ImageSample out = sample;
    for (auto& p : out.pixels) {
        const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(static_cast<double>(p), 0.0, 1.0) * 65535.0));
        p = static_cast<float>(q / 65535.0);
    }
    return out;
}

Bytes encode_dataset(std::span<const ImageSample> samples) {
    if (samples.empty()) throw std::invalid_argument("dataset: no samples");
    const std::size_t side = samples[0].side;
    const std::size_t channels = samples[0].channels;
    if (side > std::numeric_limits<std::uint16_t>::max() || channels > 255 || samples.size() > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("dataset: dimensions exceed the file format");
    Writer w;
    w.raw("MIRD");
    w.u16(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(samples.size()));
    w.u16(static_cast<std::uint16_t>(side));
    w.u16(static_cast<std::uint16_t>(side));
    w.u8(static_cast<std::uint8_t>(channels));
    for (const auto& s : samples) {
        if (s.side != side || s.channels != channels) throw std::invalid_argument("dataset: samples differ in shape");
        w.u8(static_cast<std::uint8_t>(s.label));
        w.u8(static_cast<std::uint8_t>(s.generator));
        for (float p : s.pixels) {
            if (!(p >= 0.0f && p <= 1.0f)) throw std::invalid_argument("dataset: pixel outside [0,1]");
            w.u16(static_cast<std::uint16_t>(std::lround(static_cast<double>(p) * 65535.0)));
        }
    }
    return w.take();
}

std::vector<ImageSample> decode_dataset(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "dataset");
    if (r.raw(4) != "MIRD") throw CorruptArtifact("dataset: bad magic");
    const std::uint16_t version = r.u16();
    if (version != kDatasetVersion) throw CorruptArtifact("dataset: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    const std::uint16_t h = r.u16();
    const std::uint16_t w = r.u16();
    const std::uint8_t c = r.u8();
    if (h == 0 || c == 0 || h != w) throw CorruptArtifact("dataset: bad image dimensions");
    const std::size_t per_sample = 2 + 2 * static_cast<std::size_t>(h) * w * c;
    if (r.remaining() != per_sample * count) throw CorruptArtifact("dataset: size does not match header");
    std::vector<ImageSample> out(count);
    for (auto& s : out) {
        const std::uint8_t label = r.u8();
        const std::uint8_t gen = r.u8();
        if (label > 1 || gen > 3) throw CorruptArtifact("dataset: invalid label or generator id");
        s.label = static_cast<Label>(label);
        s.generator = static_cast<GeneratorId>(gen);
        if ((s.generator == GeneratorId::Natural) != (s.label == Label::Real))
            throw CorruptArtifact("dataset: label does not match generator");
        s.side = h;
        s.channels = c;
        s.pixels.resize(static_cast<std::size_t>(h) * w * c);
        for (auto& p : s.pixels) p = static_cast<float>(r.u16() / 65535.0);
    }
    return out;
}

Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) { write_file(path, encode_checkpoint(tensors)); }
NamedTensors load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }
void save_dataset(const std::string& path, std::span<const ImageSample> samples) { write_file(path, encode_dataset(samples)); }
std::vector<ImageSample> load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

}  // namespace mirage::io

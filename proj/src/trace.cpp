// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "lim/trace.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "lim/errors.hpp"

namespace lim {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

void put_floats(std::ostream& out, std::span<const float> xs) {
    for (float x : xs) put_u32(out, std::bit_cast<std::uint32_t>(x));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::uint64_t v, const char* what) {
    if (v > 0xffffffffull) {
        throw ShapeError(std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

// Counts are validated before allocation so corrupted headers cannot request
// absurd buffers; data is still read in bounded chunks.
constexpr std::size_t kChunkFloats = 1u << 18;

} // namespace

HeadGeometry TraceHeader::geometry() const {
    return HeadGeometry{num_query_heads, num_kv_heads, head_dim};
}

std::size_t TraceHeader::query_floats() const noexcept {
    return recorded_layers.size() * num_query_heads * static_cast<std::size_t>(head_dim);
}

std::size_t TraceHeader::key_floats() const noexcept {
    return recorded_layers.size() * num_kv_heads * static_cast<std::size_t>(head_dim);
}

std::uint64_t TraceHeader::record_bytes() const noexcept {
    return 4 + 4 * static_cast<std::uint64_t>(query_floats() + key_floats());
}

void TraceHeader::validate() const {
    if (version != kTraceVersion) {
        throw ShapeError("unsupported trace version " + std::to_string(version));
    }
    geometry().validate();
    if (recorded_layers.empty()) {
        throw ShapeError("trace must record at least one layer");
    }
    for (std::size_t i = 0; i < recorded_layers.size(); ++i) {
        if (recorded_layers[i] >= num_layers || (i > 0 && recorded_layers[i] <= recorded_layers[i - 1])) {
            throw ShapeError("recorded layers must be strictly increasing and < num_layers");
        }
    }
    const std::size_t expect = recorded_layers.size() * num_kv_heads * static_cast<std::size_t>(prompt_len) * head_dim;
    if (prompt_keys.size() != expect) {
        throw ShapeError("prompt key section holds " + std::to_string(prompt_keys.size()) + " floats, expected " +
                         std::to_string(expect));
    }
}

std::span<const float> TraceHeader::prompt_key(std::size_t recorded, std::size_t kv_head, std::size_t pos) const {
    const std::size_t off = ((recorded * num_kv_heads + kv_head) * prompt_len + pos) * head_dim;
    return std::span<const float>(prompt_keys).subspan(off, head_dim);
}

std::span<const float> StepRecord::query(const TraceHeader& h, std::size_t recorded, std::size_t head) const {
    const std::size_t off = (recorded * h.num_query_heads + head) * h.head_dim;
    return std::span<const float>(queries).subspan(off, h.head_dim);
}

std::span<const float> StepRecord::key(const TraceHeader& h, std::size_t recorded, std::size_t kv_head) const {
    const std::size_t off = (recorded * h.num_kv_heads + kv_head) * h.head_dim;
    return std::span<const float>(keys).subspan(off, h.head_dim);
}

TraceWriter::TraceWriter(std::ostream& out, TraceHeader header) : out_(out), header_(std::move(header)) {
    header_.validate();
    const std::size_t rec = header_.num_recorded();
    out_.write(kTraceMagic.data(), kTraceMagic.size());
    put_u32(out_, header_.version);
    put_u32(out_, header_.num_layers);
    put_u32(out_, header_.num_query_heads);
    put_u32(out_, header_.num_kv_heads);
    put_u32(out_, header_.head_dim);
    put_u32(out_, header_.prompt_len);
    put_u32(out_, checked_u32(rec, "recorded layer count"));
    for (std::uint32_t l : header_.recorded_layers) put_u32(out_, l);
    put_u32(out_, checked_u32(4ull * header_.prompt_keys.size(), "prompt key section"));
    put_floats(out_, header_.prompt_keys);
    checked_u32(header_.record_bytes(), "record size");
    if (!out_) {
        throw IoError("failed writing trace header");
    }
}

void TraceWriter::write(const StepRecord& record) {
    const std::size_t rec = header_.num_recorded();
    if (record.queries.size() != header_.query_floats() || record.keys.size() != header_.key_floats()) {
        throw ShapeError("step record does not match trace geometry");
    }
    if (any_ && record.step <= last_step_) {
        throw ConfigError("trace steps must be strictly increasing");
    }
    put_u32(out_, static_cast<std::uint32_t>(header_.record_bytes()));
    put_u32(out_, record.step);
    const std::size_t qn = header_.num_query_heads * static_cast<std::size_t>(header_.head_dim);
    const std::size_t kn = header_.num_kv_heads * static_cast<std::size_t>(header_.head_dim);
    for (std::size_t r = 0; r < rec; ++r) {
        put_floats(out_, std::span<const float>(record.queries).subspan(r * qn, qn));
        put_floats(out_, std::span<const float>(record.keys).subspan(r * kn, kn));
    }
    if (!out_) {
        throw IoError("failed writing trace record");
    }
    any_ = true;
    last_step_ = record.step;
}

bool TraceReader::read_exact(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    return got == n;
}

std::uint32_t TraceReader::read_u32(const char* what) {
    const std::uint64_t at = offset_;
    unsigned char b[4];
    if (!read_exact(b, 4)) {
        throw TraceFormatError(std::string("truncated ") + what, at);
    }
    return get_u32(b);
}

void TraceReader::read_floats(std::vector<float>& out, std::size_t count, const char* what) {
    out.clear();
    std::vector<unsigned char> buf;
    while (out.size() < count) {
        const std::size_t n = std::min(kChunkFloats, count - out.size());
        buf.resize(4 * n);
        const std::uint64_t at = offset_;
        if (!read_exact(buf.data(), buf.size())) {
            throw TraceFormatError(std::string("truncated ") + what, at);
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(std::bit_cast<float>(get_u32(buf.data() + 4 * i)));
        }
    }
}

TraceReader::TraceReader(std::istream& in) : in_(in) {
    std::array<char, 8> magic{};
    if (!read_exact(magic.data(), magic.size()) || magic != kTraceMagic) {
        throw TraceFormatError("bad magic, not a LIMTRC01 trace", 0);
    }
    std::uint64_t at = offset_;
    header_.version = read_u32("version");
    if (header_.version != kTraceVersion) {
        throw TraceFormatError("unsupported version " + std::to_string(header_.version), at);
    }
    const std::uint64_t geometry_at = offset_;
    header_.num_layers = read_u32("num_layers");
    header_.num_query_heads = read_u32("num_query_heads");
    header_.num_kv_heads = read_u32("num_kv_heads");
    header_.head_dim = read_u32("head_dim");
    header_.prompt_len = read_u32("prompt_len");
    try {
        header_.geometry().validate();
    } catch (const ShapeError& e) {
        throw TraceFormatError(std::string("geometry mismatch: ") + e.what(), geometry_at);
    }
    if (header_.num_layers == 0) {
        throw TraceFormatError("num_layers must be >= 1", geometry_at);
    }
    at = offset_;
    const std::uint32_t rec = read_u32("recorded layer count");
    if (rec == 0 || rec > header_.num_layers) {
        throw TraceFormatError("recorded layer count out of range", at);
    }
    header_.recorded_layers.clear();
    for (std::uint32_t i = 0; i < rec; ++i) {
        at = offset_;
        const std::uint32_t l = read_u32("recorded layer index");
        if (l >= header_.num_layers || (i > 0 && l <= header_.recorded_layers.back())) {
            throw TraceFormatError("recorded layer indices must be increasing and < num_layers", at);
        }
        header_.recorded_layers.push_back(l);
    }
    at = offset_;
    const std::uint32_t prompt_bytes = read_u32("prompt section length");
    const std::uint64_t expect = 4ull * rec * header_.num_kv_heads * header_.prompt_len * header_.head_dim;
    if (prompt_bytes != expect) {
        throw TraceFormatError("prompt section length " + std::to_string(prompt_bytes) + " != expected " +
                                   std::to_string(expect),
                               at);
    }
    read_floats(header_.prompt_keys, prompt_bytes / 4, "prompt key section");
    if (header_.record_bytes() > 0xffffffffull) {
        throw TraceFormatError("record size does not fit in 32 bits", geometry_at);
    }
}

bool TraceReader::next(StepRecord& record) {
    const std::uint64_t at = offset_;
    unsigned char b[4];
    in_.read(reinterpret_cast<char*>(b), 4);
    const auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    if (got == 0) {
        return false;
    }
    if (got != 4) {
        throw TraceFormatError("truncated record length", at);
    }
    const std::uint32_t len = get_u32(b);
    if (len != header_.record_bytes()) {
        throw TraceFormatError("record length " + std::to_string(len) + " != expected " +
                                   std::to_string(header_.record_bytes()),
                               at);
    }
    const std::uint64_t step_at = offset_;
    record.step = read_u32("step index");
    if (any_ && record.step <= last_step_) {
        throw TraceFormatError("step indices must be strictly increasing", step_at);
    }
    const std::size_t rec = header_.num_recorded();
    const std::size_t qn = header_.num_query_heads * static_cast<std::size_t>(header_.head_dim);
    const std::size_t kn = header_.num_kv_heads * static_cast<std::size_t>(header_.head_dim);
    record.queries.clear();
    record.keys.clear();
    record.queries.reserve(rec * qn);
    record.keys.reserve(rec * kn);
    std::vector<float> chunk;
    for (std::size_t r = 0; r < rec; ++r) {
        read_floats(chunk, qn, "record queries");
        record.queries.insert(record.queries.end(), chunk.begin(), chunk.end());
        read_floats(chunk, kn, "record keys");
        record.keys.insert(record.keys.end(), chunk.begin(), chunk.end());
    }
    any_ = true;
    last_step_ = record.step;
    return true;
}

void write_trace(const TraceHeader& header, std::span<const StepRecord> records, std::ostream& out) {
    TraceWriter w(out, header);
    for (const auto& r : records) w.write(r);
}

Trace read_trace(std::istream& in) {
    TraceReader reader(in);
    Trace t{reader.header(), {}};
    StepRecord r;
    while (reader.next(r)) {
        t.steps.push_back(r);
    }
    return t;
}

void save_trace(const std::filesystem::path& path, const Trace& trace) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_trace(trace.header, trace.steps, out);
    out.flush();
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open trace " + path.string());
    }
    return read_trace(in);
}

} // namespace lim

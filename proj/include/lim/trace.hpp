// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lim/attention.hpp"

namespace lim {

// Layout (all integers u32 little-endian, all floats IEEE-754 binary32 LE):
//
//   magic[8] = "LIMTRC01"
//   version, num_layers, num_query_heads, num_kv_heads, head_dim, prompt_len
//   num_recorded, recorded_layer[num_recorded]       (strictly increasing)
//   prompt_bytes, f32[recorded][kv_heads][prompt_len][head_dim]
//   repeated until EOF:
//     record_bytes, step, then per recorded layer:
//       f32[query_heads][head_dim] queries, f32[kv_heads][head_dim] new keys
//
// record_bytes counts everything after itself (the step word included).
inline constexpr std::array<char, 8> kTraceMagic{'L', 'I', 'M', 'T', 'R', 'C', '0', '1'};
inline constexpr std::uint32_t kTraceVersion = 1;

struct TraceHeader {
    std::uint32_t version = kTraceVersion;
    std::uint32_t num_layers = 1;
    std::uint32_t num_query_heads = 1;
    std::uint32_t num_kv_heads = 1;
    std::uint32_t head_dim = 1;
    std::uint32_t prompt_len = 0;
    std::vector<std::uint32_t> recorded_layers{0};
    /// Keys of the prompt positions, [recorded][kv][prompt_len][head_dim].
    std::vector<float> prompt_keys;

    HeadGeometry geometry() const;
    std::size_t num_recorded() const noexcept { return recorded_layers.size(); }
    std::size_t query_floats() const noexcept;  // per step, all recorded layers
    std::size_t key_floats() const noexcept;    // per step, all recorded layers
    std::uint64_t record_bytes() const noexcept;

    /// Throws ShapeError on inconsistent geometry or prompt key size.
    void validate() const;

    /// Keys of one prompt position.
    std::span<const float> prompt_key(std::size_t recorded, std::size_t kv_head, std::size_t pos) const;

    friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

/// Queries and freshly appended keys of one decode step.
struct StepRecord {
    std::uint32_t step = 0;
    std::vector<float> queries;  // [recorded][query_heads][head_dim]
    std::vector<float> keys;     // [recorded][kv_heads][head_dim]

    std::span<const float> query(const TraceHeader& h, std::size_t recorded, std::size_t head) const;
    std::span<const float> key(const TraceHeader& h, std::size_t recorded, std::size_t kv_head) const;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Trace {
    TraceHeader header;
    std::vector<StepRecord> steps;

    friend bool operator==(const Trace&, const Trace&) = default;
};

/// Streams a trace: the header is written on construction, records one at a time.
class TraceWriter {
public:
    TraceWriter(std::ostream& out, TraceHeader header);

    /// Throws ShapeError on wrong vector sizes and ConfigError on non-increasing steps.
    void write(const StepRecord& record);
    const TraceHeader& header() const noexcept { return header_; }

private:
    std::ostream& out_;
    TraceHeader header_;
    bool any_ = false;
    std::uint32_t last_step_ = 0;
};

/// Streams a trace without buffering the whole file. Parse failures raise
/// TraceFormatError with the byte offset of the offending field.
class TraceReader {
public:
    explicit TraceReader(std::istream& in);

    const TraceHeader& header() const noexcept { return header_; }
    /// False at a clean end of file.
    bool next(StepRecord& record);
    std::uint64_t offset() const noexcept { return offset_; }

private:
    bool read_exact(void* dst, std::size_t n);
    std::uint32_t read_u32(const char* what);
    void read_floats(std::vector<float>& out, std::size_t count, const char* what);

    std::istream& in_;
    TraceHeader header_;
    std::uint64_t offset_ = 0;
    bool any_ = false;
    std::uint32_t last_step_ = 0;
};

void write_trace(const TraceHeader& header, std::span<const StepRecord> records, std::ostream& out);
Trace read_trace(std::istream& in);

void save_trace(const std::filesystem::path& path, const Trace& trace);
Trace load_trace(const std::filesystem::path& path);

} // namespace lim

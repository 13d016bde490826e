// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lim {

/// Base for every error the library raises. `kind()` is a stable,
/// machine-readable tag surfaced by the CLI.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual std::string_view kind() const noexcept = 0;
};

#define LIM_DEFINE_ERROR(Name, tag)                                      \
    class Name : public Error {                                          \
    public:                                                              \
        using Error::Error;                                              \
        std::string_view kind() const noexcept override { return tag; }  \
    }

LIM_DEFINE_ERROR(ShapeError, "shape");
LIM_DEFINE_ERROR(EmptyContextError, "empty_context");
LIM_DEFINE_ERROR(NumericError, "numeric");
LIM_DEFINE_ERROR(IndexError, "index");
LIM_DEFINE_ERROR(BudgetError, "budget");
LIM_DEFINE_ERROR(ConfigError, "config");
LIM_DEFINE_ERROR(IoError, "io");

#undef LIM_DEFINE_ERROR

/// Malformed trace container. Carries the byte offset where parsing failed.
class TraceFormatError : public Error {
public:
    TraceFormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::string_view kind() const noexcept override { return "trace_format"; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

} // namespace lim

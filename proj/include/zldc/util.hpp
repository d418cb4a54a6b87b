#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zldc {

// Input/config problems: CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric/runtime failures after validation: CLI maps these to exit code 3.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for content hashing (change detection, not cryptography).
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t v);

// Percentile with linear interpolation at index p/100*(n-1).
// `sorted` must be ascending and non-empty; p in [0,100].
double percentile_sorted(std::span<const double> sorted, double p);

// Shortest round-trip decimal text for a double (locale-free).
std::string format_double(double v);
double parse_double(std::string_view s);
long parse_long(std::string_view s);

// Whole-file helpers.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p);
void write_file_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
std::string read_file_text(const std::filesystem::path& p);
void write_file_text(const std::filesystem::path& p, std::string_view text);
std::uint64_t hash_file(const std::filesystem::path& p);

// Minimal CSV: no quoting, fields must not contain ',' or newlines.
std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p);

// Runs fn(i) for i in [0,n). With workers <= 1 runs inline; otherwise
// splits [0,n) into contiguous chunks across threads. fn must only write
// to per-index slots so the result is identical for any worker count.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace zldc

#include "zldc/util.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace zldc {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw ValidationError("percentile of empty range");
    if (p < 0.0 || p > 100.0) throw ValidationError("percentile out of [0,100]");
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p / 100.0 * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(h);
    if (i + 1 >= n) return sorted[n - 1];
    const double f = h - static_cast<double>(i);
    return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw ComputeError("format_double failed");
    return std::string(buf, end);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("bad numeric field: '" + std::string(s) + "'");
    return v;
}

long parse_long(std::string_view s) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("bad integer field: '" + std::string(s) + "'");
    return v;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + p.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ComputeError("short write: " + p.string());
}

std::string read_file_text(const std::filesystem::path& p) {
    auto bytes = read_file_bytes(p);
    return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const std::filesystem::path& p, std::string_view text) {
    write_file_bytes(p, std::span<const std::uint8_t>(
                            reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t hash_file(const std::filesystem::path& p) {
    auto bytes = read_file_bytes(p);
    return fnv1a64(bytes.data(), bytes.size());
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
    std::istringstream in(read_file_text(p));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::vector<std::exception_ptr> errors(t);
    for (unsigned w = 0; w < t; ++w) {
        pool.emplace_back([&, w]() {
            const std::size_t lo = n * w / t;
            const std::size_t hi = n * (w + 1) / t;
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace zldc

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptrail {

// Bad input from the user or from a trace file. CLI maps this to exit code 1.
class UserError : public std::runtime_error {
 public:
  explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariant. CLI maps this to exit code 2.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

namespace util {

std::vector<std::string_view> split(std::string_view s, char sep);

// Record-field escaping for the trace text format: backslash escapes for
// '\', '|', ';' plus \n, \r, \t so a field can never break record framing.
std::string escape_field(std::string_view s);
// Returns std::nullopt on a malformed escape sequence.
std::optional<std::string> unescape_field(std::string_view s);

// Token escaping for the whitespace-separated dump format. "-" encodes an
// absent value; a literal "-", an empty string, and whitespace are escaped.
std::string escape_token(std::string_view s);
std::optional<std::string> unescape_token(std::string_view s);

bool glob_match(std::string_view pattern, std::string_view text);

std::optional<std::int64_t> parse_int(std::string_view s);
std::optional<std::uint64_t> parse_uint(std::string_view s);

// "host:port" -> host part (everything before the last ':').
std::string_view host_of(std::string_view addr);

// True for RFC1918, loopback and link-local IPv4 addresses.
bool is_private_ipv4(std::string_view host);

std::string_view basename_of(std::string_view path);

}  // namespace util
}  // namespace ptrail

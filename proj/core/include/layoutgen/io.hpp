#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace layoutgen {

// Writes via a temp file in the same directory plus rename, so readers never
// observe partial content and a crash cannot corrupt an existing file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);  // throws InvalidInputError

// Little-endian IEEE-754 binary64 payloads used by checkpoints.
std::string doubles_to_b64(const std::vector<double>& values);
std::vector<double> b64_to_doubles(const std::string& text);

// "%.17g" rendering used by report files.
std::string format_real(double v);

}  // namespace layoutgen

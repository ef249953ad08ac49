#pragma once

#include <string>

namespace bct {

// Whole-file text helpers; failures throw DataError naming the path.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace bct

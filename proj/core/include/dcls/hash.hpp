#pragma once

#include <string>
#include <string_view>

namespace dcls {

// SHA-1 of a byte string, lowercase hex.
std::string sha1_hex(std::string_view data);

// Git-style blob hash: sha1("blob <len>\0<content>").
std::string git_blob_sha1(std::string_view content);

// Blob hash of a file's contents. Throws RuntimeError if unreadable.
std::string git_blob_sha1_file(const std::string& path);

} // namespace dcls

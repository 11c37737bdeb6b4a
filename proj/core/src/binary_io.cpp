#include "binary_io.hpp"

#include <fstream>
#include <iterator>
#include <system_error>

namespace hndh {

const char* to_string(LoadErrorKind kind) {
  switch (kind) {
    case LoadErrorKind::bad_magic: return "bad magic";
    case LoadErrorKind::unsupported_version: return "unsupported version";
    case LoadErrorKind::truncated: return "truncated file";
    case LoadErrorKind::dimension_mismatch: return "dimension mismatch";
    case LoadErrorKind::invariant_violation: return "invariant violation";
    case LoadErrorKind::parse: return "parse error";
  }
  return "load error";
}

namespace io {

void Reader::expect_magic(std::string_view magic, std::string_view what) {
  if (data_.size() - pos_ < magic.size() ||
      std::string_view(data_.data() + pos_, magic.size()) != magic) {
    throw LoadError(LoadErrorKind::bad_magic, std::string(what) + ": expected \"" +
                                                  std::string(magic) + "\"");
  }
  pos_ += magic.size();
}

void Reader::require(std::size_t count, std::string_view what) const {
  if (data_.size() - pos_ < count) {
    throw LoadError(LoadErrorKind::truncated,
                    std::string(what) + ": needs " + std::to_string(count) + " bytes, " +
                        std::to_string(data_.size() - pos_) + " left");
  }
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.empty()) throw IoError("empty output path");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

}  // namespace io
}  // namespace hndh

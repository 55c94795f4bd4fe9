#include "msta/util/binary_io.h"

#include <fstream>
#include <sstream>

#include "msta/error.h"

namespace msta {

std::string_view ByteReader::take(std::size_t n) {
  if (n > remaining()) {
    raise(ErrorKind::kFormat, "truncated data: need " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::kIo, "write failed: " + path);
}

}  // namespace msta

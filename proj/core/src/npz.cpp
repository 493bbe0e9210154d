#include "lsanet/npz.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lsanet {

namespace {

std::uint16_t rd16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t rd32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
void wr16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}
void wr32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

std::vector<std::uint8_t> inflate_raw(const std::uint8_t* src, std::size_t srclen,
                                      std::size_t dstlen, const std::string& name) {
  std::vector<std::uint8_t> out(dstlen);
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) {
    throw std::runtime_error("npz: inflateInit failed for member " + name);
  }
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(srclen);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(dstlen);
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) {
    throw std::runtime_error("npz: inflate failed for member " + name);
  }
  return out;
}

NpyArray parse_npy(const std::uint8_t* p, std::size_t len, const std::string& name) {
  static const char magic[] = "\x93NUMPY";
  if (len < 10 || std::memcmp(p, magic, 6) != 0) {
    throw std::runtime_error("npz: bad NPY magic in member " + name);
  }
  int major = p[6];
  std::size_t header_len, header_off;
  if (major == 1) {
    header_len = rd16(p + 8);
    header_off = 10;
  } else if (major == 2) {
    if (len < 12) throw std::runtime_error("npz: truncated NPY header in " + name);
    header_len = rd32(p + 8);
    header_off = 12;
  } else {
    throw std::runtime_error("npz: unsupported NPY version " +
                             std::to_string(major) + " in member " + name);
  }
  if (header_off + header_len > len) {
    throw std::runtime_error("npz: truncated NPY header in member " + name);
  }
  std::string header(reinterpret_cast<const char*>(p + header_off), header_len);

  auto find_value = [&](const std::string& key) -> std::string {
    auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) {
      throw std::runtime_error("npz: NPY header of member " + name +
                               " missing key " + key);
    }
    pos = header.find(':', pos);
    return header.substr(pos + 1);
  };

  NpyArray arr;
  {
    std::string v = find_value("descr");
    auto q0 = v.find('\'');
    auto q1 = v.find('\'', q0 + 1);
    arr.descr = v.substr(q0 + 1, q1 - q0 - 1);
  }
  {
    std::string v = find_value("fortran_order");
    if (v.find("True") != std::string::npos) {
      throw std::runtime_error("npz: fortran-order arrays unsupported, member " +
                               name);
    }
  }
  {
    std::string v = find_value("shape");
    auto p0 = v.find('(');
    auto p1 = v.find(')', p0);
    std::string tup = v.substr(p0 + 1, p1 - p0 - 1);
    std::stringstream ss(tup);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      std::string t;
      for (char ch : tok)
        if (!std::isspace(static_cast<unsigned char>(ch))) t += ch;
      if (!t.empty()) arr.shape.push_back(std::stoull(t));
    }
  }
  std::size_t expect = arr.numel() * arr.word_size();
  if (header_off + header_len + expect > len) {
    throw std::runtime_error("npz: NPY payload of member " + name +
                             " truncated (expected " + std::to_string(expect) +
                             " bytes)");
  }
  arr.bytes.assign(p + header_off + header_len,
                   p + header_off + header_len + expect);
  return arr;
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& arr) {
  std::string dict = "{'descr': '" + arr.descr + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < arr.shape.size(); ++i) {
    dict += std::to_string(arr.shape[i]);
    if (arr.shape.size() == 1 || i + 1 < arr.shape.size()) dict += ",";
    if (i + 1 < arr.shape.size()) dict += " ";
  }
  dict += "), }";
  std::size_t base = 10 + dict.size() + 1;  // +1 newline
  std::size_t pad = (64 - base % 64) % 64;
  dict += std::string(pad, ' ');
  dict += '\n';

  std::vector<std::uint8_t> out;
  const char magic[] = "\x93NUMPY";
  out.insert(out.end(), magic, magic + 6);
  out.push_back(1);
  out.push_back(0);
  wr16(out, static_cast<std::uint16_t>(dict.size()));
  out.insert(out.end(), dict.begin(), dict.end());
  out.insert(out.end(), arr.bytes.begin(), arr.bytes.end());
  return out;
}

}  // namespace

std::size_t NpyArray::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::size_t NpyArray::word_size() const {
  if (descr.size() < 2) {
    throw std::runtime_error("npz: malformed dtype descriptor '" + descr + "'");
  }
  return std::stoull(descr.substr(2));
}

std::map<std::string, NpyArray> read_npz(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("npz: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 22) throw std::runtime_error("npz: file too small: " + path);

  // end-of-central-directory record (no zip64, no comment scan beyond 64k)
  std::size_t eocd = std::string::npos;
  std::size_t scan_limit = buf.size() >= 65558 ? buf.size() - 65558 : 0;
  for (std::size_t i = buf.size() - 22 + 1; i-- > scan_limit;) {
    if (rd32(buf.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string::npos) {
    throw std::runtime_error("npz: no zip end-of-central-directory in " + path);
  }
  std::uint16_t count = rd16(buf.data() + eocd + 10);
  std::uint32_t cd_off = rd32(buf.data() + eocd + 16);

  std::map<std::string, NpyArray> out;
  std::size_t pos = cd_off;
  for (std::uint16_t e = 0; e < count; ++e) {
    if (pos + 46 > buf.size() || rd32(buf.data() + pos) != 0x02014b50) {
      throw std::runtime_error("npz: corrupt central directory in " + path);
    }
    std::uint16_t method = rd16(buf.data() + pos + 10);
    std::uint32_t csize = rd32(buf.data() + pos + 20);
    std::uint32_t usize = rd32(buf.data() + pos + 24);
    std::uint16_t nlen = rd16(buf.data() + pos + 28);
    std::uint16_t xlen = rd16(buf.data() + pos + 30);
    std::uint16_t clen = rd16(buf.data() + pos + 32);
    std::uint32_t lho = rd32(buf.data() + pos + 42);
    std::string name(reinterpret_cast<const char*>(buf.data() + pos + 46), nlen);
    pos += 46 + nlen + xlen + clen;

    // local header: re-read name/extra lengths, data follows
    if (lho + 30 > buf.size() || rd32(buf.data() + lho) != 0x04034b50) {
      throw std::runtime_error("npz: corrupt local header for member " + name);
    }
    std::uint16_t lnlen = rd16(buf.data() + lho + 26);
    std::uint16_t lxlen = rd16(buf.data() + lho + 28);
    const std::uint8_t* data = buf.data() + lho + 30 + lnlen + lxlen;

    std::vector<std::uint8_t> raw;
    if (method == 0) {
      raw.assign(data, data + csize);
    } else if (method == 8) {
      raw = inflate_raw(data, csize, usize, name);
    } else {
      throw std::runtime_error("npz: unsupported compression method " +
                               std::to_string(method) + " for member " + name);
    }
    std::string key = name;
    if (key.size() > 4 && key.substr(key.size() - 4) == ".npy") {
      key = key.substr(0, key.size() - 4);
    }
    out[key] = parse_npy(raw.data(), raw.size(), name);
  }
  return out;
}

void write_npz(const std::string& path,
               const std::map<std::string, NpyArray>& entries) {
  std::vector<std::uint8_t> out;
  struct CdEntry {
    std::string name;
    std::uint32_t crc, size, offset;
  };
  std::vector<CdEntry> cd;

  for (const auto& [key, arr] : entries) {
    std::string name = key + ".npy";
    std::vector<std::uint8_t> payload = serialize_npy(arr);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, payload.data(), static_cast<uInt>(payload.size())));
    std::uint32_t off = static_cast<std::uint32_t>(out.size());

    wr32(out, 0x04034b50);
    wr16(out, 20);  // version needed
    wr16(out, 0);   // flags
    wr16(out, 0);   // stored
    wr16(out, 0);   // mod time
    wr16(out, 0);   // mod date
    wr32(out, crc);
    wr32(out, static_cast<std::uint32_t>(payload.size()));
    wr32(out, static_cast<std::uint32_t>(payload.size()));
    wr16(out, static_cast<std::uint16_t>(name.size()));
    wr16(out, 0);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), payload.begin(), payload.end());

    cd.push_back({name, crc, static_cast<std::uint32_t>(payload.size()), off});
  }

  std::uint32_t cd_off = static_cast<std::uint32_t>(out.size());
  for (const auto& e : cd) {
    wr32(out, 0x02014b50);
    wr16(out, 20);
    wr16(out, 20);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr32(out, e.crc);
    wr32(out, e.size);
    wr32(out, e.size);
    wr16(out, static_cast<std::uint16_t>(e.name.size()));
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr32(out, 0);
    wr32(out, e.offset);
    out.insert(out.end(), e.name.begin(), e.name.end());
  }
  std::uint32_t cd_size = static_cast<std::uint32_t>(out.size()) - cd_off;
  wr32(out, 0x06054b50);
  wr16(out, 0);
  wr16(out, 0);
  wr16(out, static_cast<std::uint16_t>(cd.size()));
  wr16(out, static_cast<std::uint16_t>(cd.size()));
  wr32(out, cd_size);
  wr32(out, cd_off);
  wr16(out, 0);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("npz: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("npz: write failed for " + path);
}

NpyArray make_npy_u8(std::vector<std::size_t> shape,
                     std::vector<std::uint8_t> values) {
  NpyArray arr;
  arr.descr = "|u1";
  arr.shape = std::move(shape);
  arr.bytes = std::move(values);
  if (arr.bytes.size() != arr.numel()) {
    throw std::runtime_error("make_npy_u8: shape/value size mismatch");
  }
  return arr;
}

}  // namespace lsanet

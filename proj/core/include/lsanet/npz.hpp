#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lsanet {

/// Raw NPY payload: dtype descriptor (e.g. "|u1", "<f8"), shape, C-order
/// bytes.
struct NpyArray {
  std::string descr;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> bytes;

  std::size_t numel() const;
  std::size_t word_size() const;
};

/// Reads a zip of NPY members (stored or deflated). Keys have any trailing
/// ".npy" stripped.
std::map<std::string, NpyArray> read_npz(const std::string& path);

/// Writes a zip with stored (uncompressed) NPY members; keys gain ".npy".
void write_npz(const std::string& path,
               const std::map<std::string, NpyArray>& entries);

NpyArray make_npy_u8(std::vector<std::size_t> shape,
                     std::vector<std::uint8_t> values);

}  // namespace lsanet

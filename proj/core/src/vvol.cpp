#include "usvis/vvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <system_error>

namespace usvis {
namespace {

constexpr char kMagic[4] = {'V', 'V', 'O', 'L'};

void put_u32(std::byte* out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(const std::byte* in) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= std::to_integer<std::uint32_t>(in[i]) << (8 * i);
  return value;
}

void put_f32(std::byte* out, float value) { put_u32(out, std::bit_cast<std::uint32_t>(value)); }
float get_f32(const std::byte* in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace

std::vector<std::byte> encode_vvol(const Volume& volume) {
  const Dims& d = volume.dims();
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (d.nx > kMax || d.ny > kMax || d.nz > kMax) {
    throw Error(ErrorCode::InvalidArgument, "volume dims exceed the VVOL 32-bit range");
  }
  std::vector<std::byte> out(kVvolHeaderSize + 4 * volume.size());
  std::memcpy(out.data(), kMagic, 4);
  out[4] = std::byte{kVvolVersion};
  out[5] = std::byte{kVvolDtypeFloat32};
  put_u32(out.data() + 8, static_cast<std::uint32_t>(d.nx));
  put_u32(out.data() + 12, static_cast<std::uint32_t>(d.ny));
  put_u32(out.data() + 16, static_cast<std::uint32_t>(d.nz));
  put_f32(out.data() + 20, volume.spacing().sx);
  put_f32(out.data() + 24, volume.spacing().sy);
  put_f32(out.data() + 28, volume.spacing().sz);
  std::byte* payload = out.data() + kVvolHeaderSize;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(payload, volume.values().data(), 4 * volume.size());
  } else {
    for (std::size_t i = 0; i < volume.size(); ++i) put_f32(payload + 4 * i, volume[i]);
  }
  return out;
}

Volume decode_vvol(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "missing VVOL magic");
  }
  if (bytes.size() < kVvolHeaderSize) {
    throw Error(ErrorCode::TruncatedPayload, "VVOL header is shorter than 32 bytes");
  }
  const auto version = std::to_integer<std::uint8_t>(bytes[4]);
  if (version != kVvolVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "VVOL version " + std::to_string(version));
  }
  const auto dtype = std::to_integer<std::uint8_t>(bytes[5]);
  if (dtype != kVvolDtypeFloat32) {
    throw Error(ErrorCode::UnsupportedDtype, "VVOL dtype " + std::to_string(dtype));
  }
  const Dims dims{get_u32(bytes.data() + 8), get_u32(bytes.data() + 12), get_u32(bytes.data() + 16)};
  const Spacing spacing{get_f32(bytes.data() + 20), get_f32(bytes.data() + 24),
                        get_f32(bytes.data() + 28)};
  const std::size_t available = (bytes.size() - kVvolHeaderSize) / 4;
  // nx * ny * nz > available, without overflowing.
  const std::uint64_t plane = std::uint64_t{dims.nx} * dims.ny;
  if (dims.nz != 0 && plane != 0 && plane > available / dims.nz) {
    std::ostringstream msg;
    msg << "header declares " << dims.nx << "x" << dims.ny << "x" << dims.nz
        << " samples but payload holds " << available;
    throw Error(ErrorCode::TruncatedPayload, msg.str());
  }
  const std::size_t count = dims.voxel_count();
  std::vector<float> data(count);
  const std::byte* payload = bytes.data() + kVvolHeaderSize;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(data.data(), payload, 4 * count);
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = get_f32(payload + 4 * i);
  }
  return Volume(dims, spacing, std::move(data));
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw Error(ErrorCode::IoError, "cannot read " + path.string());
  }
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::random_device entropy;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(entropy());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

void write_vvol(const Volume& volume, const std::filesystem::path& path) {
  write_file_atomic(path, encode_vvol(volume));
}

Volume read_vvol(const std::filesystem::path& path) { return decode_vvol(read_file_bytes(path)); }

}  // namespace usvis

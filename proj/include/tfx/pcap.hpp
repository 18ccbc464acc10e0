#pragma once
// Minimal pcap container support: classic global/record headers with the
// Ethernet link type, and Ethernet/IPv4/TCP|UDP frame decoding.

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "tfx/core.hpp"

namespace tfx::pcap {

inline constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkEthernet = 1;

struct Record {
  std::uint64_t timestamp_us = 0;
  std::uint32_t original_length = 0;
  std::vector<std::uint8_t> data;
};

inline std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {
    std::array<std::uint8_t, 24> h{};
    if (!read_exact(h.data(), h.size())) throw DataError("pcap global header truncated");
    const std::uint32_t magic = le32(h.data());
    if (magic == kMagicMicros || magic == kMagicNanos) {
      swapped_ = false;
    } else if (bswap32(magic) == kMagicMicros || bswap32(magic) == kMagicNanos) {
      swapped_ = true;
    } else {
      throw DataError("not a pcap file (bad magic)");
    }
    nanos_ = (swapped_ ? bswap32(magic) : magic) == kMagicNanos;
    if (u32(h.data() + 20) != kLinkEthernet) throw DataError("pcap link type is not Ethernet");
  }

  /// False at a clean end of file; throws on a truncated record.
  bool next(Record& rec) {
    std::array<std::uint8_t, 16> h{};
    in_.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(h.size()));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return false;
    if (got < h.size()) throw DataError("pcap record header truncated");
    const std::uint64_t sec = u32(h.data());
    const std::uint64_t frac = u32(h.data() + 4);
    rec.timestamp_us = sec * 1000000ULL + (nanos_ ? frac / 1000 : frac);
    const std::uint32_t incl = u32(h.data() + 8);
    rec.original_length = u32(h.data() + 12);
    if (incl > (1u << 24)) throw DataError("pcap record length implausible");
    rec.data.resize(incl);
    if (!read_exact(rec.data.data(), incl)) throw DataError("pcap record data truncated");
    return true;
  }

 private:
  static std::uint32_t le32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }
  std::uint32_t u32(const std::uint8_t* p) const { return swapped_ ? bswap32(le32(p)) : le32(p); }
  bool read_exact(std::uint8_t* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  std::istream& in_;
  bool swapped_ = false;
  bool nanos_ = false;
};

struct Frame {
  Ipv4 src_ip = 0;
  Ipv4 dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;
  int payload_length = 0;
};

enum class Decode { ok, non_ipv4, non_tcp_udp, fragment, malformed };

inline std::uint16_t be16(const std::uint8_t* p) { return std::uint16_t(p[0] << 8 | p[1]); }
inline std::uint32_t be32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | p[3];
}

inline Decode decode_frame(std::span<const std::uint8_t> b, Frame& f) {
  constexpr std::size_t eth = 14;
  if (b.size() < eth) return Decode::malformed;
  if (be16(b.data() + 12) != 0x0800) return Decode::non_ipv4;
  const auto ip = b.subspan(eth);
  if (ip.size() < 20 || (ip[0] >> 4) != 4) return Decode::malformed;
  const std::size_t ihl = std::size_t(ip[0] & 0x0f) * 4;
  const std::size_t total = be16(ip.data() + 2);
  if (ihl < 20 || ip.size() < ihl || total < ihl) return Decode::malformed;
  const std::uint16_t frag = be16(ip.data() + 6);
  if ((frag & 0x1fff) != 0 || (frag & 0x2000) != 0) return Decode::fragment;
  f.protocol = ip[9];
  f.src_ip = be32(ip.data() + 12);
  f.dst_ip = be32(ip.data() + 16);
  const auto l4 = ip.subspan(ihl);
  std::size_t l4_header = 0;
  if (f.protocol == 6) {
    if (l4.size() < 20) return Decode::malformed;
    l4_header = std::size_t(l4[12] >> 4) * 4;
    if (l4_header < 20) return Decode::malformed;
  } else if (f.protocol == 17) {
    if (l4.size() < 8) return Decode::malformed;
    l4_header = 8;
  } else {
    return Decode::non_tcp_udp;
  }
  f.src_port = be16(l4.data());
  f.dst_port = be16(l4.data() + 2);
  if (total < ihl + l4_header) return Decode::malformed;
  f.payload_length = static_cast<int>(total - ihl - l4_header);
  return Decode::ok;
}

namespace detail {
inline void put_le32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
  out.write(b, 4);
}
inline void put_le16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}
inline void put_be16(std::vector<std::uint8_t>& b, std::size_t at, std::uint16_t v) {
  b[at] = std::uint8_t(v >> 8);
  b[at + 1] = std::uint8_t(v & 0xff);
}
inline void put_be32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  put_be16(b, at, std::uint16_t(v >> 16));
  put_be16(b, at + 2, std::uint16_t(v & 0xffff));
}
}  // namespace detail

inline void write_global_header(std::ostream& out) {
  detail::put_le32(out, kMagicMicros);
  detail::put_le16(out, 2);
  detail::put_le16(out, 4);
  detail::put_le32(out, 0);
  detail::put_le32(out, 0);
  detail::put_le32(out, 65535);
  detail::put_le32(out, kLinkEthernet);
}

/// Writes one frame holding headers only; the original length accounts for
/// the payload bytes that were not captured.
inline void write_frame(std::ostream& out, std::uint64_t timestamp_us, const Frame& f) {
  const std::size_t l4 = f.protocol == 6 ? 20 : 8;
  std::vector<std::uint8_t> b(14 + 20 + l4, 0);
  detail::put_be16(b, 12, 0x0800);
  b[14] = 0x45;
  detail::put_be16(b, 16, static_cast<std::uint16_t>(20 + l4 + static_cast<std::size_t>(f.payload_length)));
  b[22] = 64;
  b[23] = f.protocol;
  detail::put_be32(b, 26, f.src_ip);
  detail::put_be32(b, 30, f.dst_ip);
  detail::put_be16(b, 34, f.src_port);
  detail::put_be16(b, 36, f.dst_port);
  if (f.protocol == 6)
    b[34 + 12] = 0x50;
  else
    detail::put_be16(b, 34 + 4, static_cast<std::uint16_t>(8 + f.payload_length));
  detail::put_le32(out, static_cast<std::uint32_t>(timestamp_us / 1000000));
  detail::put_le32(out, static_cast<std::uint32_t>(timestamp_us % 1000000));
  detail::put_le32(out, static_cast<std::uint32_t>(b.size()));
  detail::put_le32(out, static_cast<std::uint32_t>(b.size() + static_cast<std::size_t>(f.payload_length)));
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace tfx::pcap

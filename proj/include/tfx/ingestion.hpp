#pragma once
// Trace ingestion: CSV and pcap-lite parsing, biflow segmentation and
// extraction of the first-L-packet signed payload-length matrix.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tfx/core.hpp"
#include "tfx/pcap.hpp"

namespace tfx {

/// One parsed packet as it appears on the wire: endpoints in capture orientation.
struct RawEvent {
  std::uint64_t timestamp_us = 0;
  Ipv4 src_ip = 0;
  Ipv4 dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;
  int payload_length = 0;
  std::string label;  // empty when the trace carries no label column

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

struct ParseStats {
  std::size_t events = 0;
  std::size_t malformed = 0;
  std::size_t skipped_non_ipv4 = 0;
  std::size_t skipped_protocol = 0;
  std::size_t skipped_fragments = 0;
  bool has_label_column = false;
};

inline std::optional<Ipv4> parse_ipv4(std::string_view s) {
  Ipv4 out = 0;
  for (int part = 0; part < 4; ++part) {
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || v > 255 || ptr == s.data()) return std::nullopt;
    out = (out << 8) | v;
    s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
    if (part < 3) {
      if (s.empty() || s.front() != '.') return std::nullopt;
      s.remove_prefix(1);
    }
  }
  if (!s.empty()) return std::nullopt;
  return out;
}

inline std::string format_ipv4(Ipv4 ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline std::optional<std::uint8_t> parse_protocol(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "TCP") return std::uint8_t{6};
  if (up == "UDP") return std::uint8_t{17};
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v > 255) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

inline std::string format_protocol(std::uint8_t p) {
  if (p == 6) return "TCP";
  if (p == 17) return "UDP";
  return std::to_string(p);
}

namespace detail {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline constexpr const char* kCsvHeader = "ts_us,src_ip,dst_ip,src_port,dst_port,proto,payload_len";

/// Streams CSV rows to `sink` in file order. Malformed rows are skipped and
/// counted; an unterminated malformed last line is reported as truncation
/// after the preceding rows were emitted.
template <typename Sink>
ParseStats parse_csv(std::istream& in, Sink&& sink) {
  ParseStats stats;
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV trace is empty");
  const auto header = detail::split_fields(detail::trim(line), ',');
  const auto expected = detail::split_fields(kCsvHeader, ',');
  if (header.size() < expected.size() || header.size() > expected.size() + 1)
    throw DataError("CSV header must be " + std::string(kCsvHeader) + "[,label]");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (detail::trim(header[i]) != expected[i])
      throw DataError("CSV header column " + std::to_string(i) + " must be '" +
                      std::string(expected[i]) + "'");
  stats.has_label_column = header.size() == expected.size() + 1;
  if (stats.has_label_column && detail::trim(header.back()) != "label")
    throw DataError("optional 8th CSV column must be 'label'");
  const std::size_t columns = header.size();

  while (std::getline(in, line)) {
    const bool terminated = !in.eof();
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto f = detail::split_fields(trimmed, ',');
    RawEvent ev;
    bool ok = f.size() == columns;
    if (ok) {
      auto src = parse_ipv4(detail::trim(f[1]));
      auto dst = parse_ipv4(detail::trim(f[2]));
      auto proto = parse_protocol(detail::trim(f[5]));
      ok = src && dst && proto && detail::parse_number(detail::trim(f[0]), ev.timestamp_us) &&
           detail::parse_number(detail::trim(f[3]), ev.src_port) &&
           detail::parse_number(detail::trim(f[4]), ev.dst_port) &&
           detail::parse_number(detail::trim(f[6]), ev.payload_length) && ev.payload_length >= 0;
      if (ok) {
        ev.src_ip = *src;
        ev.dst_ip = *dst;
        ev.protocol = *proto;
        if (stats.has_label_column) ev.label = std::string(detail::trim(f[7]));
      }
    }
    if (!ok) {
      if (!terminated) throw DataError("CSV trace truncated in its last row");
      ++stats.malformed;
      continue;
    }
    ++stats.events;
    sink(std::move(ev));
  }
  return stats;
}

inline void write_csv(std::ostream& out, const std::vector<RawEvent>& events, bool with_label) {
  out << kCsvHeader << (with_label ? ",label" : "") << '\n';
  for (const auto& e : events) {
    out << e.timestamp_us << ',' << format_ipv4(e.src_ip) << ',' << format_ipv4(e.dst_ip) << ','
        << e.src_port << ',' << e.dst_port << ',' << format_protocol(e.protocol) << ','
        << e.payload_length;
    if (with_label) out << ',' << e.label;
    out << '\n';
  }
}

/// Streams Ethernet/IPv4/TCP|UDP packets of a pcap file to `sink`. Payload
/// length is the IPv4 total length minus the IP and transport headers, so
/// snaplen-truncated captures still report the on-wire payload.
template <typename Sink>
ParseStats parse_pcap(std::istream& in, Sink&& sink) {
  ParseStats stats;
  pcap::Reader reader(in);
  pcap::Record rec;
  while (reader.next(rec)) {
    pcap::Frame frame;
    switch (pcap::decode_frame(rec.data, frame)) {
      case pcap::Decode::ok: break;
      case pcap::Decode::non_ipv4: ++stats.skipped_non_ipv4; continue;
      case pcap::Decode::non_tcp_udp: ++stats.skipped_protocol; continue;
      case pcap::Decode::fragment: ++stats.skipped_fragments; continue;
      case pcap::Decode::malformed: ++stats.malformed; continue;
    }
    RawEvent ev;
    ev.timestamp_us = rec.timestamp_us;
    ev.src_ip = frame.src_ip;
    ev.dst_ip = frame.dst_ip;
    ev.src_port = frame.src_port;
    ev.dst_port = frame.dst_port;
    ev.protocol = frame.protocol;
    ev.payload_length = frame.payload_length;
    ++stats.events;
    sink(std::move(ev));
  }
  return stats;
}

/// Writes events as header-only Ethernet/IPv4/TCP|UDP frames (captured
/// length covers the headers, original length includes the payload).
inline void write_pcap(std::ostream& out, const std::vector<RawEvent>& events) {
  pcap::write_global_header(out);
  for (const auto& e : events) {
    pcap::Frame f{e.src_ip, e.dst_ip, e.src_port, e.dst_port, e.protocol, e.payload_length};
    pcap::write_frame(out, e.timestamp_us, f);
  }
}

enum class TraceKind { pcap_lite, csv };

/// Maps packets to class names, either from the CSV label column or from
/// (protocol, port) rules evaluated against either endpoint.
class LabelRule {
 public:
  struct Entry {
    std::optional<std::uint8_t> protocol;
    std::optional<std::uint16_t> port;
    std::string label;
  };

  static LabelRule from_column() { return LabelRule{}; }

  static LabelRule from_entries(std::vector<Entry> entries) {
    LabelRule r;
    r.entries_ = std::move(entries);
    return r;
  }

  /// Parses "tcp:443=web,udp:53=dns,*:8080=alt" (protocol or port may be '*').
  static LabelRule parse(std::string_view text) {
    std::vector<Entry> entries;
    for (auto item : detail::split_fields(text, ',')) {
      item = detail::trim(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      const auto colon = item.find(':');
      if (eq == std::string_view::npos || colon == std::string_view::npos || colon > eq)
        throw ConfigError("label rule '" + std::string(item) + "' is not proto:port=label");
      Entry e;
      const auto proto = item.substr(0, colon);
      const auto port = item.substr(colon + 1, eq - colon - 1);
      e.label = std::string(item.substr(eq + 1));
      if (proto != "*") {
        e.protocol = parse_protocol(proto);
        if (!e.protocol) throw ConfigError("bad protocol in label rule: " + std::string(proto));
      }
      if (port != "*") {
        std::uint16_t p = 0;
        if (!detail::parse_number(port, p)) throw ConfigError("bad port in label rule: " + std::string(port));
        e.port = p;
      }
      if (e.label.empty()) throw ConfigError("empty label in label rule");
      entries.push_back(std::move(e));
    }
    if (entries.empty()) throw ConfigError("label rule has no entries");
    return from_entries(std::move(entries));
  }

  bool uses_column() const { return entries_.empty(); }

  /// Class names in id order: rule order, or sorted column values.
  std::vector<std::string> names(const std::vector<RawEvent>& events) const {
    std::vector<std::string> out;
    if (uses_column()) {
      for (const auto& e : events)
        if (!e.label.empty()) out.push_back(e.label);
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
    } else {
      for (const auto& e : entries_)
        if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
    }
    return out;
  }

  /// Class name for a packet, or empty when no rule applies.
  std::string classify(const RawEvent& ev) const {
    if (uses_column()) return ev.label;
    for (const auto& e : entries_) {
      if (e.protocol && *e.protocol != ev.protocol) continue;
      if (e.port && *e.port != ev.src_port && *e.port != ev.dst_port) continue;
      return e.label;
    }
    return {};
  }

 private:
  std::vector<Entry> entries_;
};

struct TraceSource {
  TraceKind kind = TraceKind::csv;
  std::string path;
  LabelRule label_rule = LabelRule::from_column();
};

struct TraceEvents {
  std::vector<RawEvent> events;
  ParseStats stats;
};

inline TraceEvents parse_trace(const TraceSource& source) {
  std::ifstream in(source.path, std::ios::binary);
  if (!in) throw DataError("cannot open trace " + source.path);
  TraceEvents out;
  auto sink = [&](RawEvent&& e) { out.events.push_back(std::move(e)); };
  out.stats = source.kind == TraceKind::csv ? parse_csv(in, sink) : parse_pcap(in, sink);
  if (source.label_rule.uses_column() && !out.stats.has_label_column)
    throw ConfigError("trace has no label column and no label rule was given");
  return out;
}

struct SegmentStats {
  std::size_t biflows = 0;
  std::size_t qualifying_packets = 0;
  std::size_t zero_payload_dropped = 0;
  std::size_t unlabeled_dropped = 0;
  std::size_t label_conflicts = 0;
  std::size_t empty_biflows_dropped = 0;
};

struct Segmentation {
  std::vector<std::string> label_names;
  std::vector<BiflowRecord> biflows;  // ordered by canonical key
  SegmentStats stats;
};

/// Groups events into one biflow per canonical key. Events are stable-sorted
/// by timestamp first; the initiator is the source of a key's first event,
/// zero-payload packets included. Zero-payload packets are then dropped.
inline Segmentation segment_biflows(std::vector<RawEvent> events, const LabelRule& rule) {
  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp_us < b.timestamp_us; });
  Segmentation seg;
  seg.label_names = rule.names(events);

  struct Group {
    Ipv4 initiator_ip = 0;
    std::uint16_t initiator_port = 0;
    int label = -1;
    std::vector<PacketEvent> packets;
  };
  std::map<CanonicalKey, Group> groups;
  for (const auto& ev : events) {
    const auto name = rule.classify(ev);
    if (name.empty()) {
      ++seg.stats.unlabeled_dropped;
      continue;
    }
    const int label = static_cast<int>(
        std::find(seg.label_names.begin(), seg.label_names.end(), name) - seg.label_names.begin());
    const auto key = canonical_key(ev.src_ip, ev.dst_ip, ev.src_port, ev.dst_port, ev.protocol);
    auto [it, inserted] = groups.try_emplace(key);
    auto& g = it->second;
    if (inserted) {
      g.initiator_ip = ev.src_ip;
      g.initiator_port = ev.src_port;
      g.label = label;
    } else if (g.label != label) {
      ++seg.stats.label_conflicts;
    }
    if (ev.payload_length <= 0) {
      ++seg.stats.zero_payload_dropped;
      continue;
    }
    const bool up = ev.src_ip == g.initiator_ip && ev.src_port == g.initiator_port;
    g.packets.push_back({ev.payload_length, up ? Direction::upstream : Direction::downstream,
                         ev.timestamp_us});
    ++seg.stats.qualifying_packets;
  }
  for (auto& [key, g] : groups) {
    if (g.packets.empty()) {
      ++seg.stats.empty_biflows_dropped;
      continue;
    }
    seg.biflows.push_back({key, g.label, std::move(g.packets)});
  }
  seg.stats.biflows = seg.biflows.size();
  return seg;
}

/// First min(n, L) positive-payload packets as direction-signed values,
/// clamped to +-pl_max and sentinel-padded.
inline TrafficMatrix extract_matrix(const BiflowRecord& biflow, int length, int pl_max) {
  std::vector<int> data;
  for (const auto& p : biflow.packets) {
    if (p.payload_length < 1) continue;
    if (static_cast<int>(data.size()) == length) break;
    const int pl = std::min(p.payload_length, pl_max);
    data.push_back(p.direction == Direction::upstream ? pl : -pl);
  }
  if (data.empty()) throw DataError("biflow has no packet with payload");
  return TrafficMatrix::from_data(data, length, biflow.label, pl_max);
}

struct IngestReport {
  ParseStats parse;
  SegmentStats segment;
  std::size_t samples = 0;
  std::size_t dropped_samples = 0;
};

inline Corpus build_corpus(const Segmentation& seg, int length, int pl_max, IngestReport* report = nullptr) {
  Corpus corpus{LabelSpace(seg.label_names, length, pl_max), {}, Provenance::real};
  std::size_t dropped = 0;
  for (const auto& b : seg.biflows) {
    try {
      corpus.samples.push_back(extract_matrix(b, length, pl_max));
    } catch (const DataError&) {
      ++dropped;
    }
  }
  if (report) {
    report->segment = seg.stats;
    report->samples = corpus.samples.size();
    report->dropped_samples = dropped;
  }
  return corpus;
}

}  // namespace tfx

#pragma once
// Labeled toy traces with known per-class structure. Each class is a
// first-order chain over a few signed payload lengths with a memoryless stop
// probability; flows are rendered as TCP packet events including zero-payload
// handshake and ACK packets.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tfx/core.hpp"
#include "tfx/ingestion.hpp"
#include "tfx/rng.hpp"

namespace tfx {

struct ToyClass {
  std::string name;
  std::size_t flows = 0;
  std::vector<int> states;  // signed payload lengths
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;
  double stop = 0.2;  // probability of ending after each data packet
  int max_packets = 14;
  std::uint16_t server_port = 443;
};

struct ToySpec {
  std::vector<ToyClass> classes;
};

namespace detail {

inline std::size_t draw(Rng& rng, const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  return rng.categorical(std::span<const double>(w), total);
}

inline std::vector<double> skewed_row(std::size_t n, std::size_t shift) {
  std::vector<double> row(n);
  for (std::size_t j = 0; j < n; ++j) row[j] = 1.0 + static_cast<double>((j + shift) % n);
  return row;
}

}  // namespace detail

/// Five classes with disjoint payload bands (class c lives around
/// 100 + 250c bytes in both directions), 500 flows each by default.
inline ToySpec separable_toy(std::size_t flows_per_class = 500) {
  ToySpec spec;
  for (int c = 0; c < 5; ++c) {
    ToyClass k;
    k.name = "c" + std::to_string(c);
    k.flows = flows_per_class;
    const int b = 100 + 250 * c;
    k.states = {b + 10, -(b + 30), b + 60, -(b + 90)};
    const auto n = k.states.size();
    k.initial = detail::skewed_row(n, static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < n; ++i) k.transition.push_back(detail::skewed_row(n, i * 3 + static_cast<std::size_t>(c)));
    k.stop = 0.2;
    k.server_port = static_cast<std::uint16_t>(8000 + c);
    spec.classes.push_back(std::move(k));
  }
  return spec;
}

/// Five classes of decreasing size whose value sets interleave: class c
/// uses magnitudes 100 + 40j + 8c, j < 12, in either direction, so no
/// single threshold separates classes and few-shot training is hard.
inline ToySpec imbalanced_toy(std::vector<std::size_t> flows = {1000, 500, 250, 125, 60}) {
  ToySpec spec;
  for (std::size_t c = 0; c < flows.size(); ++c) {
    ToyClass k;
    k.name = "m" + std::to_string(c);
    k.flows = flows[c];
    for (int j = 0; j < 12; ++j) {
      const int mag = 100 + 40 * j + 8 * static_cast<int>(c);
      k.states.push_back(mag);
      k.states.push_back(-mag);
    }
    const auto n = k.states.size();
    k.initial.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) k.transition.push_back(detail::skewed_row(n, i * 5 + c));
    k.stop = 0.1;
    k.server_port = static_cast<std::uint16_t>(9000 + c);
    spec.classes.push_back(std::move(k));
  }
  return spec;
}

/// Data packet sequence of one flow drawn from its class chain.
inline std::vector<int> toy_sequence(const ToyClass& k, Rng& rng) {
  std::vector<int> out;
  std::size_t s = detail::draw(rng, k.initial);
  for (;;) {
    out.push_back(k.states[s]);
    if (static_cast<int>(out.size()) >= k.max_packets || rng.uniform() < k.stop) break;
    s = detail::draw(rng, k.transition[s]);
  }
  return out;
}

/// Renders every flow as TCP events sorted by timestamp. Flow f of class c
/// uses stream derive_seed(seed, c, f), so adding classes does not perturb
/// existing ones.
inline std::vector<RawEvent> toy_events(const ToySpec& spec, std::uint64_t seed, bool with_label = true) {
  std::vector<RawEvent> events;
  std::uint32_t client_counter = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& k = spec.classes[c];
    const Ipv4 server = (192u << 24) | (168u << 16) | (static_cast<Ipv4>(c) << 8) | 1u;
    for (std::size_t f = 0; f < k.flows; ++f) {
      Rng rng(derive_seed(seed, c, f));
      ++client_counter;
      const Ipv4 client = (10u << 24) | (client_counter & 0xffffffu);
      const auto cport = static_cast<std::uint16_t>(20000 + rng.below(40000));
      std::uint64_t t = rng.below(60'000'000);
      auto emit = [&](bool up, int payload) {
        RawEvent e;
        e.timestamp_us = t;
        e.src_ip = up ? client : server;
        e.dst_ip = up ? server : client;
        e.src_port = up ? cport : k.server_port;
        e.dst_port = up ? k.server_port : cport;
        e.protocol = 6;
        e.payload_length = payload;
        if (with_label) e.label = k.name;
        events.push_back(std::move(e));
        t += 20 + rng.below(400);
      };
      emit(true, 0);   // SYN
      emit(false, 0);  // SYN-ACK
      emit(true, 0);   // ACK
      for (int v : toy_sequence(k, rng)) {
        emit(v > 0, std::abs(v));
        if (rng.uniform() < 0.3) emit(v < 0, 0);  // pure ACK from the receiver
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp_us < b.timestamp_us; });
  return events;
}

/// Toy trace pushed through segmentation and matrix extraction.
inline Corpus toy_corpus(const ToySpec& spec, std::uint64_t seed, int length = kDefaultLength,
                         int pl_max = kDefaultPlMax) {
  const auto seg = segment_biflows(toy_events(spec, seed), LabelRule::from_column());
  return build_corpus(seg, length, pl_max);
}

}  // namespace tfx

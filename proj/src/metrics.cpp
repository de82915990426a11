#include "dsmc/metrics.hpp"

#include <atomic>

namespace dsmc::metrics {
namespace {

std::atomic<std::uint64_t> g_weight_evals{0};
std::atomic<std::uint64_t> g_dense_allocs{0};
std::atomic<std::uint64_t> g_dense_max_elems{0};
std::atomic<std::uint64_t> g_lazy_max_elems{0};

void raise_max(std::atomic<std::uint64_t>& slot, std::uint64_t v) {
  std::uint64_t cur = slot.load(std::memory_order_relaxed);
  while (cur < v && !slot.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
  }
}

}  // namespace

void reset() {
  g_weight_evals.store(0, std::memory_order_relaxed);
  g_dense_allocs.store(0, std::memory_order_relaxed);
  g_dense_max_elems.store(0, std::memory_order_relaxed);
  g_lazy_max_elems.store(0, std::memory_order_relaxed);
}

Snapshot snapshot() {
  Snapshot s;
  s.weight_evals = g_weight_evals.load(std::memory_order_relaxed);
  s.dense_allocs = g_dense_allocs.load(std::memory_order_relaxed);
  s.dense_max_elems = g_dense_max_elems.load(std::memory_order_relaxed);
  s.lazy_max_elems = g_lazy_max_elems.load(std::memory_order_relaxed);
  return s;
}

void add_weight_evals(std::uint64_t n) {
  g_weight_evals.fetch_add(n, std::memory_order_relaxed);
}

void count_dense_alloc(std::size_t elems) {
  g_dense_allocs.fetch_add(1, std::memory_order_relaxed);
  raise_max(g_dense_max_elems, elems);
}

void note_lazy_alloc(std::size_t elems) {
  raise_max(g_lazy_max_elems, elems);
}

}  // namespace dsmc::metrics

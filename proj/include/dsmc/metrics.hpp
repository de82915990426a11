#pragma once

#include <cstddef>
#include <cstdint>

// Process-wide counters backing the memory/work contracts: stitch-weight
// evaluation counts, dense N^2 buffer allocations, and the peak transient
// allocation of the lazy resamplers. Tests reset, exercise, then snapshot.

namespace dsmc::metrics {

struct Snapshot {
  std::uint64_t weight_evals = 0;
  std::uint64_t dense_allocs = 0;       // number of dense weight buffers
  std::uint64_t dense_max_elems = 0;    // largest single dense buffer
  std::uint64_t lazy_max_elems = 0;     // peak transient doubles in lazy paths
};

void reset();
Snapshot snapshot();

void add_weight_evals(std::uint64_t n);
void count_dense_alloc(std::size_t elems);
void note_lazy_alloc(std::size_t elems);

}  // namespace dsmc::metrics

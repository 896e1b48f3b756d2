#pragma once

#include <malloc.h>

#include <atomic>
#include <cerrno>
#include <cstddef>

// Process-wide heap accounting by interposing the C allocator (glibc), so
// both operator new and Eigen's allocations are seen. Include from exactly
// one translation unit of an executable.
extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void* __libc_memalign(std::size_t, std::size_t);
void __libc_free(void*);
}

namespace alloc_counter {

inline std::atomic<std::size_t> live{0};
inline std::atomic<std::size_t> peak{0};

inline void reset_peak() { peak.store(live.load()); }
inline std::size_t peak_above(std::size_t base) {
  const std::size_t p = peak.load();
  return p > base ? p - base : 0;
}

inline void* track(void* p) {
  if (!p) return p;
  const std::size_t n = malloc_usable_size(p);
  const std::size_t now = live.fetch_add(n, std::memory_order_relaxed) + n;
  std::size_t prev = peak.load(std::memory_order_relaxed);
  while (now > prev && !peak.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
  }
  return p;
}

inline void untrack(void* p) {
  if (p) live.fetch_sub(malloc_usable_size(p), std::memory_order_relaxed);
}

}  // namespace alloc_counter

extern "C" {

void* malloc(std::size_t n) noexcept { return alloc_counter::track(__libc_malloc(n)); }
void* calloc(std::size_t n, std::size_t size) noexcept { return alloc_counter::track(__libc_calloc(n, size)); }
void free(void* p) noexcept {
  alloc_counter::untrack(p);
  __libc_free(p);
}
void* realloc(void* p, std::size_t n) noexcept {
  alloc_counter::untrack(p);
  return alloc_counter::track(__libc_realloc(p, n));
}
void* memalign(std::size_t align, std::size_t n) noexcept { return alloc_counter::track(__libc_memalign(align, n)); }
void* aligned_alloc(std::size_t align, std::size_t n) noexcept { return memalign(align, n); }
int posix_memalign(void** out, std::size_t align, std::size_t n) noexcept {
  void* p = memalign(align, n);
  if (!p) return ENOMEM;
  *out = p;
  return 0;
}

}

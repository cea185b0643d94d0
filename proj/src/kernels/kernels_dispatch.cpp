#include <cstdlib>
#include <string>
#include <vector>

#include "tbqn/kernels.h"

namespace tbqn::kernels {

#if defined(TBQN_HAVE_AVX2_TU)
const Table* avx2_table_impl();
#endif
#if defined(__aarch64__)
const Table* neon_table_impl();
#endif

namespace {

const Table* avx2_if_supported() {
#if defined(TBQN_HAVE_AVX2_TU) && defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) return avx2_table_impl();
#endif
  return nullptr;
}

const Table* neon_if_supported() {
#if defined(__aarch64__)
  return neon_table_impl();
#else
  return nullptr;
#endif
}

const Table* resolve() {
  const char* env = std::getenv("TBQN_KERNELS");
  std::string want = env ? env : "auto";
  if (want == "scalar") return &scalar_table();
  if (want == "avx2") {
    if (const Table* t = avx2_if_supported()) return t;
    return &scalar_table();
  }
  if (want == "neon") {
    if (const Table* t = neon_if_supported()) return t;
    return &scalar_table();
  }
  if (const Table* t = avx2_if_supported()) return t;
  if (const Table* t = neon_if_supported()) return t;
  return &scalar_table();
}

}  // namespace

const Table& active() {
  static const Table* t = resolve();
  return *t;
}

const Table* find(const std::string& name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_if_supported();
  if (name == "neon") return neon_if_supported();
  return nullptr;
}

std::vector<const Table*> available() {
  std::vector<const Table*> out{&scalar_table()};
  if (const Table* t = avx2_if_supported()) out.push_back(t);
  if (const Table* t = neon_if_supported()) out.push_back(t);
  return out;
}

}  // namespace tbqn::kernels

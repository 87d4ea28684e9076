#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/rng.hpp"

namespace testutil {

// Random valid document: 1..max_elements elements, continuous coordinates (so
// alignment ties have measure zero), optional font sizes, no explicit orders.
inline layoutgen::LayoutDocument random_document(layoutgen::num::Rng& rng, std::size_t max_elements = 8,
                                                 const std::string& id = "rnd") {
  layoutgen::LayoutDocument doc;
  doc.id = id;
  const std::size_t n = 1 + rng.next_u64() % max_elements;
  for (std::size_t i = 0; i < n; ++i) {
    layoutgen::LayoutElement e;
    e.type = static_cast<layoutgen::ElementType>(rng.next_u64() % 8);
    const double x0 = rng.uniform(0.0, 0.9);
    const double y0 = rng.uniform(0.0, 0.9);
    e.bbox = {x0, y0, x0 + rng.uniform(0.01, 1.0 - x0 - 0.001), y0 + rng.uniform(0.01, 1.0 - y0 - 0.001)};
    if (rng.uniform01() < 0.5) e.font_size = rng.uniform(0.005, 0.08);
    doc.elements.push_back(e);
  }
  return doc;
}

// Unique scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("layoutgen-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

// Writes the bundled sample datasets (and a benchmark manifest) as CSV files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "qclmix/datagen.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  std::string out_dir = "data";
  if (argc > 1) out_dir = argv[1];
  try {
    fs::create_directories(out_dir);
    const auto write = [&](const qclmix::Dataset& ds) {
      const std::string path = (fs::path(out_dir) / (ds.name + ".csv")).string();
      qclmix::write_csv(ds, path);
      std::cout << "wrote " << path << " (" << ds.num_samples() << " x "
                << ds.num_features() << ", " << ds.num_classes()
                << " classes)\n";
      return path;
    };
    const std::string ecoli = write(qclmix::make_ecoli_like());
    const std::string abalone = write(qclmix::make_abalone_like());
    const std::string pendigits = write(qclmix::make_pendigits_like());
    const std::string glass = write(qclmix::make_glass_like());

    const std::string manifest = (fs::path(out_dir) / "manifest.csv").string();
    std::ofstream m(manifest);
    m << "ecoli_like," << ecoli << ",last\n"
      << "pendigits_like," << pendigits << ",last\n"
      << "glass_like," << glass << ",last\n"
      << "abalone_like," << abalone << ",last\n";
    std::cout << "wrote " << manifest << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

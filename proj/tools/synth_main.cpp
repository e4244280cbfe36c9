// Writes a synthetic corpus and matching embedding file, for trying the
// two-stage recipe without OpenI.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "meshgen/dataio.hpp"
#include "synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic corpus (corpus.tsv) and image embeddings (embeddings.bin)"};
  std::size_t exams = 300;
  std::uint32_t dim = 32;
  std::uint64_t seed = 42;
  std::string out;
  app.add_option("--exams", exams)->capture_default_str();
  app.add_option("--dim", dim, "Embedding width")->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--out", out, "Output directory")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out);
    const auto c = meshgen::synth::exam_corpus(exams, dim, seed);
    meshgen::dataio::write_corpus(std::filesystem::path(out) / "corpus.tsv", c.records);
    meshgen::dataio::write_embeddings(std::filesystem::path(out) / "embeddings.bin", c.embeddings);
    std::cout << c.records.size() << " exams, " << c.embeddings.records.size() << " images\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

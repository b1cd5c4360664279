// Generates the synthetic offline dataset used by the end-to-end tests and
// the README walkthrough.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fixture_gen.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic doc-triage dataset fixture"};
  std::string out_dir = "fixture";
  int per_class = 3;
  bool no_doc = false;
  app.add_option("--out", out_dir, "output root directory");
  app.add_option("--per-class", per_class, "single-page images per class");
  app.add_flag("--no-doc", no_doc, "skip the multi-page document");
  CLI11_PARSE(app, argc, argv);

  doctriage::fixture::FixtureSpec spec;
  spec.per_class = per_class;
  spec.with_document = !no_doc;
  try {
    doctriage::fixture::generate(out_dir, spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "fixture written to " << out_dir << "\n";
  return 0;
}

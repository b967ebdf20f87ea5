// Writes the synthetic job-training sample as CSV.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "jtpa_fixture.hpp"

int main(int argc, char** argv) {
  jtpa::FixtureSpec spec;
  std::string out;
  CLI::App app{"synthetic job-training sample"};
  app.add_option("--n", spec.n, "sample size");
  app.add_option("--seed", spec.seed, "random seed");
  app.add_option("--q1", spec.q1, "treated share");
  app.add_option("--out", out, "output file (default stdout)");
  CLI11_PARSE(app, argc, argv);

  const auto sample = jtpa::make_fixture(spec);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) {
      std::cerr << "error: cannot open '" << out << "'\n";
      return 3;
    }
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << "earnings,treat";
  for (const auto& c : jtpa::covariate_names())
    os << ',' << c;
  os << '\n';
  os.precision(10);
  for (const auto& r : sample.rows()) {
    os << r.y << ',' << r.d;
    for (long x : r.v2)
      os << ',' << x;
    os << '\n';
  }
  return os ? 0 : 3;
}

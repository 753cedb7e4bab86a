// Offline stand-in for the chart/diagram render harness: checks the spec,
// then writes a golden SVG resized to the requested dimensions. A spec
// containing HARNESS_FAULT fails the way the real harness does.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>

namespace {

int fail(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"code", code}, {"message", message}}.dump() << std::endl;
  return 2;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stub render harness"};
  std::string spec_path, target, out_path, format = "svg";
  int width = 900, height = 560;
  app.add_option("--spec", spec_path)->required();
  app.add_option("--target", target)->required()->check(CLI::IsMember({"chart", "diagram"}));
  app.add_option("--out", out_path)->required();
  app.add_option("--format", format);
  app.add_option("--width", width);
  app.add_option("--height", height);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  const std::string spec = slurp(spec_path);
  if (spec.empty()) return fail("spec", "spec file is missing or empty: " + spec_path);
  if (spec.find("HARNESS_FAULT") != std::string::npos) return fail("render", "injected render fault");
  if (target == "chart" && nlohmann::json::parse(spec, nullptr, false).is_discarded())
    return fail("spec", "chart spec is not valid JSON");
  if (format != "svg") return fail("format", "stub harness only writes svg");
  if (width < 1 || height < 1) return fail("usage", "dimensions must be positive");

  const char* golden_env = std::getenv("DEEPREPORT_GOLDEN_SVG");
  const std::string golden_path = golden_env && *golden_env ? golden_env : DR_GOLDEN_SVG;
  std::string svg = slurp(golden_path);
  if (svg.empty()) return fail("environment", "golden SVG not found: " + golden_path);
  static const std::regex root(R"(<svg\b[^>]*>)");
  std::smatch m;
  if (!std::regex_search(svg, m, root)) return fail("environment", "golden file has no <svg> root");
  std::string tag = m.str();
  tag = std::regex_replace(tag, std::regex(R"(\swidth="[^"]*")"), " width=\"" + std::to_string(width) + "\"");
  tag = std::regex_replace(tag, std::regex(R"(\sheight="[^"]*")"), " height=\"" + std::to_string(height) + "\"");
  svg.replace(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.length(0)), tag);

  std::ofstream out(out_path, std::ios::binary);
  if (!out || !(out << svg)) return fail("io", "cannot write " + out_path);
  return 0;
}

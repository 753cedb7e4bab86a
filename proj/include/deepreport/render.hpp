#pragma once

// AVR intent → executable chart/diagram spec → rendered asset, with a data
// audit of every chart against the cited evidence.

#include "deepreport/avr.hpp"
#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::render {

enum class Target { chart_grammar, diagram_grammar };  // ECharts option JSON / Mermaid text

const char* to_string(Target t) noexcept;

struct DataPoint {
  std::string series;
  std::string label;
  double value = 0.0;

  bool operator==(const DataPoint&) const = default;
};

struct ChartSpec {
  Target target = Target::chart_grammar;
  std::string payload;
  avr::AvrBlock source_block;
  std::vector<DataPoint> declared_data_points;
};

enum class AssetFormat { svg, png };

const char* to_string(AssetFormat f) noexcept;
AssetFormat asset_format_from_string(std::string_view s);

struct RenderedVisual {
  std::filesystem::path asset_path;
  AssetFormat format = AssetFormat::svg;
  int width = 0;
  int height = 0;
  ChartSpec spec;
};

struct PointCheck {
  DataPoint point;
  std::optional<double> kb_value;
  std::string kb_label;
  double relative_error = 0.0;
  bool flagged = false;
};

struct ChartAudit {
  avr::AvrBlock block;
  std::vector<PointCheck> checks;
  bool exempt = false;  // diagrams carry no data points
  bool hallucinated = false;
};

struct AuditReport {
  std::vector<ChartAudit> per_chart;
  double summary_rate = 0.0;  // hallucinated / audited (non-exempt) charts

  void add(ChartAudit chart);
};

/// Pure table lookup on the chart type.
Target route(std::string_view chart_type, const avr::Vocabulary& vocab = avr::Vocabulary::standard());

/// (series, label, value) triples declared by an ECharts option.
std::vector<DataPoint> extract_data_points(const nlohmann::json& option);

ChartSpec make_spec(const avr::AvrBlock& block, std::string payload,
                    const avr::Vocabulary& vocab = avr::Vocabulary::standard());

/// Empty when the spec is well-formed.
std::vector<std::string> validate_syntax(const ChartSpec& spec,
                                         const avr::Vocabulary& vocab = avr::Vocabulary::standard());

/// Asks the render agent for a spec. Unresolvable Data_Source ids throw
/// Error(contract); a prose reply gets one reprompt, then Error(protocol).
ChartSpec translate(llm::Gateway& gateway, const avr::AvrBlock& block, const KnowledgeBase& kb,
                    const std::string& correction = {},
                    const avr::Vocabulary& vocab = avr::Vocabulary::standard());

/// Matches each declared value to a fact of the cited items: best label-word
/// overlap, falling back to the nearest value. Flags relative error above
/// tolerance or a missing fact.
ChartAudit audit(const ChartSpec& spec, const KnowledgeBase& kb, double tolerance = 0.01);

/// Facts of the cited items as "label = value" lines, for corrective prompts.
std::string cited_facts(const avr::AvrBlock& block, const KnowledgeBase& kb);

struct Dimensions {
  int width = 0;
  int height = 0;
};

/// Width/height from an SVG root element or a PNG header.
std::optional<Dimensions> read_image_dimensions(const std::filesystem::path& path);

struct HarnessRequest {
  std::filesystem::path spec_path;
  Target target = Target::chart_grammar;
  std::filesystem::path output_path;
  AssetFormat format = AssetFormat::svg;
  int width = 900;
  int height = 560;
};

class Harness {
 public:
  virtual ~Harness() = default;
  /// Throws Error(rendering_environment) when the harness cannot run at all,
  /// Error(protocol) when it ran and failed (message from its JSON error).
  virtual void render(const HarnessRequest& request) = 0;
};

/// Runs `harness --spec P --target chart|diagram --out P --format F --width W
/// --height H`; at most `concurrency` processes at a time.
class SubprocessHarness final : public Harness {
 public:
  SubprocessHarness(std::filesystem::path executable, int concurrency = 2,
                    std::chrono::seconds timeout = std::chrono::seconds(30));
  void render(const HarnessRequest& request) override;

 private:
  std::filesystem::path executable_;
  std::chrono::seconds timeout_;
  std::counting_semaphore<64> slots_;
};

struct RenderConfig {
  std::filesystem::path harness;
  int concurrency = 2;
  double tolerance = 0.01;
  int retry_budget = 2;
  int audit_retries = 1;
  int width = 900;
  int height = 560;
  AssetFormat format = AssetFormat::svg;
};

/// Final state of one AVR block.
struct VisualOutcome {
  SectionId section_id;
  std::size_t block_index = 0;  // within the section
  avr::AvrBlock block;
  std::optional<RenderedVisual> visual;
  bool degraded = false;
  std::string note;  // why it degraded
  bool audited = false;
  bool flagged_pre_audit = false;
  bool flagged_final = false;
  ChartAudit audit;
  int translations = 0;
  int render_failures = 0;
};

class RenderPipeline {
 public:
  RenderPipeline(llm::Gateway& gateway, std::shared_ptr<Harness> harness, RenderConfig config,
                 std::filesystem::path assets_dir, std::filesystem::path specs_dir);

  /// Translate, validate, audit (retranslating flagged charts with source
  /// values), render; degrade to a note once the retry budget is spent.
  VisualOutcome process(const SectionId& section_id, std::size_t index, const avr::AvrBlock& block,
                        const KnowledgeBase& kb);

  /// Every parsed block of the draft, concurrently, in draft order.
  std::vector<VisualOutcome> process_all(const Draft& draft, const KnowledgeBase& kb);

  /// Writes the spec file, runs the harness, checks the asset.
  RenderedVisual render(const ChartSpec& spec, const std::string& stem);

 private:
  llm::Gateway& gateway_;
  std::shared_ptr<Harness> harness_;
  RenderConfig config_;
  std::filesystem::path assets_dir_;
  std::filesystem::path specs_dir_;
};

}  // namespace deepreport::render

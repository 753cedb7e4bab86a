#include "deepreport/avr.hpp"

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace deepreport::avr {

namespace {

constexpr std::string_view kTitle = "Title";
constexpr std::string_view kChartType = "Chart_Type";
constexpr std::string_view kXAxis = "X_Axis";
constexpr std::string_view kYAxis = "Y_Axis";
constexpr std::string_view kDataSource = "Data_Source";
constexpr std::string_view kPurpose = "Purpose";

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::parse, msg); }

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_';
  });
}

// Accepts "<ref:1> <ref:2>", "<ref:1>, <ref:2>", "<ref:1><ref:2>".
std::vector<std::int64_t> parse_data_source(std::string_view value) {
  std::vector<std::int64_t> ids;
  std::size_t i = 0;
  while (i < value.size()) {
    char c = value[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ';') {
      ++i;
      continue;
    }
    if (value.substr(i, 5) != "<ref:") fail("malformed Data_Source: expected <ref:N> markers");
    auto close = value.find('>', i);
    if (close == std::string_view::npos) fail("malformed Data_Source: unterminated <ref: marker");
    std::string_view digits = value.substr(i + 5, close - i - 5);
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty())
      fail("malformed Data_Source: bad reference id '" + std::string(digits) + "'");
    if (id <= 0) fail("malformed Data_Source: reference ids must be positive");
    ids.push_back(id);
    i = close + 1;
  }
  if (ids.empty()) fail("missing mandatory field: Data_Source");
  return ids;
}

}  // namespace

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab{
      {"Bar Chart", "Line Chart", "Area Chart", "Flowchart", "Heatmap", "Pie Chart", "Timeline",
       "Scatter Plot", "Sankey", "Map", "Diagram", "Infographic", "Matrix", "Table", "Roadmap"},
      {"Bar Chart", "Line Chart", "Area Chart", "Scatter Plot", "Heatmap"},
      {"Flowchart", "Diagram", "Timeline", "Roadmap"}};
  return vocab;
}

bool Vocabulary::known(std::string_view chart_type) const {
  return std::find(chart_types.begin(), chart_types.end(), chart_type) != chart_types.end();
}

bool Vocabulary::has_axes(std::string_view chart_type) const {
  return axis_bearing.count(std::string(chart_type)) > 0;
}

bool Vocabulary::is_diagram(std::string_view chart_type) const {
  return diagram_types.count(std::string(chart_type)) > 0;
}

std::string Vocabulary::listing() const { return text::join(chart_types, ", "); }

AvrBlock parse_block(std::string_view block_text, const Vocabulary& vocab) {
  std::string_view body = text::trim(block_text);
  if (text::starts_with(body, open_tag)) body.remove_prefix(open_tag.size());
  body = text::trim(body);
  if (body.size() >= close_tag.size() && body.substr(body.size() - close_tag.size()) == close_tag)
    body.remove_suffix(close_tag.size());

  AvrBlock block;
  std::optional<std::string> title, chart_type, data_source, purpose;
  std::set<std::string> seen;
  int line_no = 0;
  for (const auto& raw : text::split_lines(body)) {
    ++line_no;
    std::string_view line = text::trim(raw);
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos)
      fail("malformed line " + std::to_string(line_no) + ": expected 'Key: value'");
    std::string key(text::trim(line.substr(0, colon)));
    std::string value(text::trim(line.substr(colon + 1)));
    if (!valid_key(key)) fail("malformed line " + std::to_string(line_no) + ": bad key '" + key + "'");
    if (!seen.insert(key).second) fail("duplicate field: " + key);

    if (key == kTitle) title = value;
    else if (key == kChartType) chart_type = value;
    else if (key == kXAxis) block.x_axis = value;
    else if (key == kYAxis) block.y_axis = value;
    else if (key == kDataSource) data_source = value;
    else if (key == kPurpose) purpose = value;
    else block.extra_fields.emplace_back(std::move(key), std::move(value));
  }

  auto require = [](const std::optional<std::string>& v, std::string_view name) -> const std::string& {
    if (!v) fail("missing mandatory field: " + std::string(name));
    if (v->empty()) fail("empty mandatory field: " + std::string(name));
    return *v;
  };
  block.title = require(title, kTitle);
  block.chart_type = require(chart_type, kChartType);
  block.data_source = parse_data_source(require(data_source, kDataSource));
  block.purpose = require(purpose, kPurpose);

  if (!vocab.known(block.chart_type))
    fail("unknown chart type '" + block.chart_type + "'; expected one of: " + vocab.listing());
  if (!vocab.has_axes(block.chart_type)) {
    if (block.x_axis) fail("axis field X_Axis not allowed for chart type " + block.chart_type);
    if (block.y_axis) fail("axis field Y_Axis not allowed for chart type " + block.chart_type);
  }
  if (block.x_axis && block.x_axis->empty()) fail("empty axis field: X_Axis");
  if (block.y_axis && block.y_axis->empty()) fail("empty axis field: Y_Axis");
  return block;
}

std::string serialize(const AvrBlock& block) {
  std::string out(open_tag);
  out += '\n';
  auto field = [&out](std::string_view key, std::string_view value) {
    out += key;
    out += ": ";
    out += value;
    out += '\n';
  };
  field(kTitle, block.title);
  field(kChartType, block.chart_type);
  if (block.x_axis) field(kXAxis, *block.x_axis);
  if (block.y_axis) field(kYAxis, *block.y_axis);
  std::string refs;
  for (std::size_t i = 0; i < block.data_source.size(); ++i) {
    if (i) refs += ' ';
    refs += "<ref:" + std::to_string(block.data_source[i]) + ">";
  }
  field(kDataSource, refs);
  field(kPurpose, block.purpose);
  for (const auto& [k, v] : block.extra_fields) field(k, v);
  out += close_tag;
  return out;
}

std::size_t token_cost(const AvrBlock& block) { return text::proxy_token_count(serialize(block)); }

std::vector<BlockSpan> extract_blocks(std::string_view text, const Vocabulary& vocab) {
  std::vector<BlockSpan> spans;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find(open_tag, pos);
    if (open == std::string_view::npos) break;
    auto close = text.find(close_tag, open + open_tag.size());
    auto next_open = text.find(open_tag, open + open_tag.size());
    BlockSpan span;
    span.start_offset = open;
    if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
      span.end_offset = next_open == std::string_view::npos ? text.size() : next_open;
      span.error = "unterminated block";
    } else {
      span.end_offset = close + close_tag.size();
      try {
        span.block = parse_block(text.substr(open, span.end_offset - open), vocab);
      } catch (const Error& e) {
        span.error = e.what();
      }
    }
    pos = span.end_offset;
    spans.push_back(std::move(span));
  }
  return spans;
}

std::vector<std::int64_t> ref_markers(std::string_view text) {
  std::vector<std::int64_t> ids;
  std::size_t pos = 0;
  while ((pos = text.find("<ref:", pos)) != std::string_view::npos) {
    auto close = text.find('>', pos);
    if (close == std::string_view::npos) break;
    std::string_view digits = text.substr(pos + 5, close - pos - 5);
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) ids.push_back(id);
    pos = close;
  }
  return ids;
}

}  // namespace deepreport::avr

#pragma once

// Abstract Visual Representation: the intent-level visualization blocks the
// writer embeds in section text.
//
//   [DATA_VISUALIZATION]
//   Title: ...
//   Chart_Type: Bar Chart
//   X_Axis: ...            (axis-bearing chart types only)
//   Y_Axis: ...
//   Data_Source: <ref:1003>
//   Purpose: ...
//   [/DATA_VISUALIZATION]

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deepreport::avr {

inline constexpr std::string_view open_tag = "[DATA_VISUALIZATION]";
inline constexpr std::string_view close_tag = "[/DATA_VISUALIZATION]";

struct AvrBlock {
  std::string title;
  std::string chart_type;
  std::vector<std::int64_t> data_source;
  std::string purpose;
  std::optional<std::string> x_axis;
  std::optional<std::string> y_axis;
  std::vector<std::pair<std::string, std::string>> extra_fields;

  bool operator==(const AvrBlock&) const = default;
};

/// A located block inside section text. [start_offset, end_offset) covers the
/// tags. Exactly one of block / error is meaningful.
struct BlockSpan {
  std::size_t start_offset = 0;
  std::size_t end_offset = 0;
  std::optional<AvrBlock> block;
  std::string error;

  bool ok() const noexcept { return block.has_value(); }
};

/// Chart-type vocabulary and the subset that carries coordinate axes.
struct Vocabulary {
  std::vector<std::string> chart_types;
  std::set<std::string> axis_bearing;
  std::set<std::string> diagram_types;  // routed to the text diagram grammar

  static const Vocabulary& standard();

  bool known(std::string_view chart_type) const;
  bool has_axes(std::string_view chart_type) const;
  bool is_diagram(std::string_view chart_type) const;
  std::string listing() const;
};

std::vector<BlockSpan> extract_blocks(std::string_view text,
                                      const Vocabulary& vocab = Vocabulary::standard());

/// Parses one block. The open/close tags are optional. Throws Error(parse).
AvrBlock parse_block(std::string_view block_text, const Vocabulary& vocab = Vocabulary::standard());

std::string serialize(const AvrBlock& block);

std::size_t token_cost(const AvrBlock& block);

/// All <ref:N> ids in order of appearance (duplicates kept).
std::vector<std::int64_t> ref_markers(std::string_view text);

}  // namespace deepreport::avr

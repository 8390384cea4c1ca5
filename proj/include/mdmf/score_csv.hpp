#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mdmf/embeddings.hpp"

namespace mdmf {

// One row of the "source_id,score,label" CSV shared by the detector and the
// baselines. Ids containing a comma, quote or line break are quoted
// (RFC 4180); scores use 17 significant digits so they round-trip.
struct ScoreRow {
  std::string source_id;
  double score = 0.0;
  Label label = Label::real;
};

std::string write_score_csv(const std::vector<ScoreRow>& rows);

// Throws FormatError on a bad header, a malformed row, an unparsable or
// non-finite score, or an unknown label.
std::vector<ScoreRow> parse_score_csv(std::string_view text);

// "real" or "generated".
Label parse_label(std::string_view text);

}  // namespace mdmf

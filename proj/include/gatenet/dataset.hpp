#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gatenet {

struct DatasetPairing {
  // (pred path, gt path), sorted lexicographically by stem.
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> stems;
  std::vector<std::string> unmatched_pred;
  std::vector<std::string> unmatched_gt;
};

// Pairs .png/.pgm files from two directories by file stem (extension
// insensitive). Throws when no stems match or a directory holds duplicate
// stems.
DatasetPairing pair_dataset(const std::string& pred_dir, const std::string& gt_dir);

}  // namespace gatenet

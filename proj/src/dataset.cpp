#include "gatenet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <stdexcept>

namespace gatenet {
namespace {

namespace fs = std::filesystem;

bool is_mask_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".pgm";
}

std::map<std::string, std::string> scan_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("pair_dataset: '" + dir + "' is not a directory");
  }
  std::map<std::string, std::string> by_stem;
  for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_mask_file(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    auto [it, inserted] = by_stem.emplace(stem, entry.path().string());
    if (!inserted) {
      throw std::runtime_error("pair_dataset: duplicate stem '" + stem + "' in " + dir);
    }
  }
  return by_stem;
}

}  // namespace

DatasetPairing pair_dataset(const std::string& pred_dir, const std::string& gt_dir) {
  const auto preds = scan_dir(pred_dir);
  const auto gts = scan_dir(gt_dir);

  DatasetPairing out;
  for (const auto& [stem, path] : preds) {
    const auto it = gts.find(stem);
    if (it == gts.end()) {
      out.unmatched_pred.push_back(stem);
      continue;
    }
    out.stems.push_back(stem);
    out.pairs.emplace_back(path, it->second);
  }
  for (const auto& [stem, path] : gts) {
    if (preds.count(stem) == 0) out.unmatched_gt.push_back(stem);
  }
  if (out.pairs.empty()) {
    throw std::runtime_error("pair_dataset: no matching stems between '" + pred_dir + "' and '" +
                             gt_dir + "'");
  }
  return out;
}

}  // namespace gatenet

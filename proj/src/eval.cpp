#include "statekit/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "statekit/error.hpp"

namespace statekit {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) throw DataError("confusion matrix needs at least one class");
}

std::uint64_t& ConfusionMatrix::at(std::size_t truth, std::size_t predicted) {
  if (truth >= names_.size() || predicted >= names_.size()) {
    throw DataError("confusion matrix index out of range");
  }
  return counts_[truth * names_.size() + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= names_.size() || predicted >= names_.size()) {
    throw DataError("confusion matrix index out of range");
  }
  return counts_[truth * names_.size() + predicted];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  const std::size_t k = names_.size();
  if (truth >= k) throw DataError("confusion matrix row out of range");
  return std::accumulate(counts_.begin() + static_cast<std::ptrdiff_t>(truth * k),
                         counts_.begin() + static_cast<std::ptrdiff_t>((truth + 1) * k),
                         std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) t += counts_[i * names_.size() + i];
  return t;
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
  const std::size_t k = names_.size();
  std::vector<std::vector<double>> rates(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    const auto sum = row_sum(i);
    if (sum == 0) continue;
    for (std::size_t j = 0; j < k; ++j) {
      rates[i][j] = static_cast<double>(at(i, j)) / static_cast<double>(sum);
    }
  }
  return rates;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted,
                                 std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    throw DataError("confusion matrix: " + std::to_string(truth.size()) + " true labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(std::move(class_names));
  const std::size_t k = cm.num_classes();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) {
      throw DataError("confusion matrix: label out of range [0," + std::to_string(k) +
                      ") at position " + std::to_string(i));
    }
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

Accuracies accuracies(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw DataError("accuracy of an empty confusion matrix is undefined");
  Accuracies a{static_cast<double>(cm.trace()) / static_cast<double>(total), {}, 0.0};
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    const auto rows = cm.row_sum(i);
    if (rows == 0) {
      a.per_class.emplace_back();
      continue;
    }
    const double acc = static_cast<double>(cm.at(i, i)) / static_cast<double>(rows);
    a.per_class.emplace_back(acc);
    sum += acc;
    ++defined;
  }
  a.mean_per_class = defined ? sum / static_cast<double>(defined) : 0.0;
  return a;
}

std::vector<MisclassifiedCell> misclassification_report(const ConfusionMatrix& cm,
                                                        std::span<const std::string> paths,
                                                        std::span<const std::size_t> truth,
                                                        std::span<const std::size_t> predicted,
                                                        std::size_t top_n) {
  if (paths.size() != truth.size() || truth.size() != predicted.size()) {
    throw DataError("misclassification report: paths, labels and predictions differ in length");
  }
  const std::size_t k = cm.num_classes();
  std::vector<MisclassifiedCell> cells;
  for (std::size_t i = 0; i < k; ++i) {
    const auto rows = cm.row_sum(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j || cm.at(i, j) == 0) continue;
      cells.push_back({i, j, cm.at(i, j),
                       static_cast<double>(cm.at(i, j)) / static_cast<double>(rows), {}});
    }
  }
  std::ranges::stable_sort(cells, [](const MisclassifiedCell& a, const MisclassifiedCell& b) {
    if (a.rate != b.rate) return a.rate > b.rate;
    return a.count > b.count;
  });
  for (auto& cell : cells) {
    for (std::size_t n = 0; n < paths.size() && cell.example_paths.size() < top_n; ++n) {
      if (truth[n] == cell.truth && predicted[n] == cell.predicted) {
        cell.example_paths.push_back(paths[n]);
      }
    }
  }
  return cells;
}

std::string confusion_matrix_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  const std::size_t k = cm.num_classes();
  for (std::size_t j = 0; j < k; ++j) os << (j ? "," : "") << cm.class_names()[j];
  os << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) os << (j ? "," : "") << cm.at(i, j);
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix parse_confusion_matrix_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
  };
  if (!std::getline(in, line)) throw DataError("confusion matrix CSV is empty");
  ConfusionMatrix cm(split(line));
  const std::size_t k = cm.num_classes();
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::getline(in, line)) throw DataError("confusion matrix CSV has too few rows");
    const auto fields = split(line);
    if (fields.size() != k) throw DataError("confusion matrix CSV row " + std::to_string(i + 1) + " has wrong width");
    for (std::size_t j = 0; j < k; ++j) {
      try {
        cm.at(i, j) = std::stoull(fields[j]);
      } catch (const std::exception&) {
        throw DataError("confusion matrix CSV cell is not a count: '" + fields[j] + "'");
      }
    }
  }
  return cm;
}

namespace {

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

struct Series {
  const char* css_class;
  const char* colour;
  std::vector<double> values;
};

std::string line_chart(std::string_view title, std::string_view y_label,
                       std::span<const EpochRecord> records, std::vector<Series> series,
                       bool unit_range) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;

  const double lo = 0.0;
  double hi = 1.0;
  if (!unit_range) {
    hi = 0.0;
    for (const auto& s : series) {
      for (double v : s.values) hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
  }
  const std::size_t n = records.size();
  auto x_at = [&](std::size_t i) {
    return kLeft + (n == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) / static_cast<double>(n - 1));
  };
  auto y_at = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  os << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
     << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line class=\"axis\" x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    os << "<text class=\"tick\" x=\"" << kLeft - 6 << "\" y=\"" << num(y_at(v) + 4)
       << "\" text-anchor=\"end\" font-size=\"11\">" << num(v, 3) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
     << "transform=\"rotate(-90 16 " << kTop + plot_h / 2 << ")\">" << xml_escape(y_label)
     << "</text>\n";
  double legend_y = kTop + 8;
  for (const auto& s : series) {
    os << "<polyline class=\"" << s.css_class << "\" fill=\"none\" stroke=\"" << s.colour
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      os << (i ? " " : "") << num(x_at(i)) << ',' << num(y_at(s.values[i]));
    }
    os << "\"/>\n";
    os << "<text class=\"legend\" x=\"" << kLeft + plot_w - 90 << "\" y=\"" << legend_y
       << "\" fill=\"" << s.colour << "\" font-size=\"12\">" << s.css_class << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
}

}  // namespace

std::string loss_curve_svg(std::span<const EpochRecord> records) {
  Series train{"train", "#1f77b4", {}}, val{"validation", "#d62728", {}};
  for (const auto& r : records) {
    train.values.push_back(r.train_loss);
    val.values.push_back(r.val_loss);
  }
  return line_chart("Loss", "cross-entropy", records, {train, val}, false);
}

std::string accuracy_curve_svg(std::span<const EpochRecord> records) {
  Series train{"train", "#1f77b4", {}}, val{"validation", "#d62728", {}};
  for (const auto& r : records) {
    train.values.push_back(r.train_accuracy);
    val.values.push_back(r.val_accuracy);
  }
  return line_chart("Accuracy", "accuracy", records, {train, val}, true);
}

std::string confusion_heatmap_svg(const ConfusionMatrix& cm, std::string_view title) {
  const std::size_t k = cm.num_classes();
  constexpr double kCell = 48, kLeft = 120, kTop = 120;
  const double size = kCell * static_cast<double>(k);
  const double width = kLeft + size + 20, height = kTop + size + 20;
  const auto rates = cm.row_normalized();

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < k; ++i) {
    const double centre = kTop + kCell * (static_cast<double>(i) + 0.5);
    os << "<text class=\"row-label\" x=\"" << kLeft - 6 << "\" y=\"" << num(centre + 4)
       << "\" text-anchor=\"end\" font-size=\"11\">" << xml_escape(cm.class_names()[i])
       << "</text>\n";
    const double cx = kLeft + kCell * (static_cast<double>(i) + 0.5);
    os << "<text class=\"col-label\" x=\"" << num(cx) << "\" y=\"" << kTop - 6
       << "\" font-size=\"11\" transform=\"rotate(-45 " << num(cx) << ' ' << kTop - 6 << ")\">"
       << xml_escape(cm.class_names()[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double rate = rates[i][j];
      const int shade = 255 - static_cast<int>(rate * 200.0 + 0.5);
      const double x = kLeft + kCell * static_cast<double>(j);
      const double y = kTop + kCell * static_cast<double>(i);
      os << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell
         << "\" height=\"" << kCell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" "
         << "stroke=\"#999\" data-count=\"" << cm.at(i, j) << "\"/>\n";
      os << "<text class=\"pct\" x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
         << "\" text-anchor=\"middle\" font-size=\"11\">" << num(rate * 100.0, 0) << "%</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

PlotFiles emit_confusion_artifacts(const ConfusionMatrix& cm, const std::filesystem::path& out_dir,
                                   std::string_view title) {
  ensure_dir(out_dir);
  PlotFiles files;
  const auto svg = out_dir / "confusion_matrix.svg";
  const auto csv = out_dir / "confusion_matrix.csv";
  write_text(svg, confusion_heatmap_svg(cm, title));
  write_text(csv, confusion_matrix_csv(cm));
  files.written = {svg, csv};
  return files;
}

PlotFiles emit_plots(std::span<const EpochRecord> records, const ConfusionMatrix& cm,
                     const std::filesystem::path& out_dir) {
  if (records.empty()) throw DataError("cannot plot zero epoch records");
  ensure_dir(out_dir);
  PlotFiles files;
  const auto loss = out_dir / "loss.svg";
  const auto acc = out_dir / "accuracy.svg";
  const auto metrics = out_dir / "metrics.csv";
  write_text(loss, loss_curve_svg(records));
  write_text(acc, accuracy_curve_svg(records));
  std::ostringstream csv;
  write_metrics_csv(csv, records);
  write_text(metrics, csv.str());
  files.written = {loss, acc, metrics};
  auto cm_files = emit_confusion_artifacts(cm, out_dir, "Confusion Matrix");
  files.written.insert(files.written.end(), cm_files.written.begin(), cm_files.written.end());
  return files;
}

}  // namespace statekit

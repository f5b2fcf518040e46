#include <fstream>
#include <sstream>

#include "ltv/error.hpp"
#include "ltv/pipeline.hpp"
#include "ltv/text.hpp"

namespace fs = std::filesystem;

namespace ltv::pipeline {

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += text::format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view field, std::string_view what) {
  std::vector<double> out;
  if (field.empty()) return out;
  for (auto part : text::split(field, ',')) out.push_back(text::parse_double(part, what));
  return out;
}

template <typename Int>
std::vector<Int> parse_ints(std::string_view field, std::string_view what) {
  std::vector<Int> out;
  if (field.empty()) return out;
  for (auto part : text::split(field, ',')) out.push_back(text::parse_int<Int>(part, what));
  return out;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kUserHeader =
    "user_id\tsplit\tcohort_date\tcategories\tfirst_period\thistory\tactual\tactual_mask\t"
    "has_purchase\tx\tt_x\tT\tmean_value";

}  // namespace

void write_dataset(const PreparedDataset& d, const fs::path& dir) {
  nlohmann::json meta = {{"format", "ltv-prepared"},
                         {"version", 1},
                         {"mode", to_string(d.mode)},
                         {"period_days", d.period_days},
                         {"horizons", d.horizons},
                         {"anchor", d.anchor.to_string()},
                         {"history_end", d.history_end.to_string()},
                         {"label_cutoff", d.label_cutoff.to_string()},
                         {"feature_names", d.feature_names},
                         {"vocabulary", d.vocabulary},
                         {"dropped_users", d.dropped_users},
                         {"config", d.config.to_json()}};

  std::string users = std::string(kUserHeader) + "\n";
  std::string steps = "user_id\tindex\tcalendar\tgap";
  for (const auto& f : d.feature_names) steps += "\tf:" + f;
  const auto labels = d.horizon_labels();
  for (const auto& l : labels) steps += "\ty:" + l;
  for (const auto& l : labels) steps += "\tm:" + l;
  steps += '\n';
  for (const auto& u : d.users) {
    const auto& r = u.rfm;
    users += std::to_string(u.user_id) + '\t' + to_string(u.split) + '\t' + u.cohort_date.to_string() + '\t' +
             join(u.categories) + '\t' + std::to_string(u.first_period) + '\t' + join(u.history) + '\t' +
             join(u.actual) + '\t' + join(u.actual_mask) + '\t' + (r.has_purchase ? "1" : "0") + '\t' +
             text::format_double(r.x) + '\t' + text::format_double(r.t_x) + '\t' + text::format_double(r.T) +
             '\t' + text::format_double(r.mean_value) + '\n';
    for (const auto& s : u.steps) {
      steps += std::to_string(u.user_id) + '\t' + std::to_string(s.index) + '\t' + std::to_string(s.calendar) +
               '\t' + std::to_string(s.gap);
      for (double f : s.features) steps += '\t' + text::format_double(f);
      for (double y : s.targets) steps += '\t' + text::format_double(y);
      for (auto m : s.mask) steps += '\t' + std::to_string(m);
      steps += '\n';
    }
  }

  // Build everything in a sibling directory, then swap it in.
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    write_text(tmp / "meta.json", meta.dump(2) + "\n");
    write_text(tmp / "norm.json", d.norm.to_json().dump(2) + "\n");
    write_text(tmp / "users.tsv", users);
    write_text(tmp / "steps.tsv", steps);
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

PreparedDataset read_dataset(const fs::path& dir) {
  PreparedDataset d;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "meta.json"));
    if (meta.value("format", "") != "ltv-prepared" || meta.value("version", 0) != 1) {
      throw DataError("not an ltv-prepared v1 directory: " + dir.string());
    }
    d.mode = parse_mode(meta.at("mode").get<std::string>());
    meta.at("period_days").get_to(d.period_days);
    meta.at("horizons").get_to(d.horizons);
    d.anchor = Date::parse(meta.at("anchor").get<std::string>());
    d.history_end = Date::parse(meta.at("history_end").get<std::string>());
    d.label_cutoff = Date::parse(meta.at("label_cutoff").get<std::string>());
    meta.at("feature_names").get_to(d.feature_names);
    meta.at("vocabulary").get_to(d.vocabulary);
    meta.at("dropped_users").get_to(d.dropped_users);
    d.config = PrepareConfig::from_json(meta.at("config"));
    d.norm = NormStats::from_json(nlohmann::json::parse(read_text(dir / "norm.json")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset metadata in " + dir.string() + ": " + e.what());
  }
  const std::size_t F = d.feature_names.size(), K = d.horizons.size();

  std::istringstream users(read_text(dir / "users.tsv"));
  std::string line;
  std::getline(users, line);
  if (line != kUserHeader) throw DataError("users.tsv header mismatch");
  std::size_t line_no = 1;
  while (std::getline(users, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    const std::string where = "users.tsv line " + std::to_string(line_no);
    if (f.size() != 13) throw DataError(where + ": expected 13 columns");
    PreparedUser u;
    u.user_id = text::parse_int<std::uint64_t>(f[0], where);
    u.split = parse_split(f[1]);
    u.cohort_date = Date::parse(f[2]);
    u.categories = parse_ints<std::int32_t>(f[3], where);
    u.first_period = text::parse_int<std::int64_t>(f[4], where);
    u.history = parse_doubles(f[5], where);
    u.actual = parse_doubles(f[6], where);
    u.actual_mask = parse_ints<std::uint8_t>(f[7], where);
    u.rfm.has_purchase = f[8] == "1";
    u.rfm.x = text::parse_double(f[9], where);
    u.rfm.t_x = text::parse_double(f[10], where);
    u.rfm.T = text::parse_double(f[11], where);
    u.rfm.mean_value = text::parse_double(f[12], where);
    if (u.actual.size() != K || u.actual_mask.size() != K || u.categories.size() != d.vocabulary.size()) {
      throw DataError(where + ": list lengths disagree with meta.json");
    }
    d.users.push_back(std::move(u));
  }

  std::istringstream steps(read_text(dir / "steps.tsv"));
  std::getline(steps, line);
  line_no = 1;
  std::size_t cursor = 0;
  while (std::getline(steps, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    const std::string where = "steps.tsv line " + std::to_string(line_no);
    if (f.size() != 4 + F + 2 * K) throw DataError(where + ": wrong column count");
    const auto id = text::parse_int<std::uint64_t>(f[0], where);
    while (cursor < d.users.size() && d.users[cursor].user_id != id) ++cursor;
    if (cursor == d.users.size()) throw DataError(where + ": step for unknown or out-of-order user");
    LabeledStep s;
    s.index = text::parse_int<std::size_t>(f[1], where);
    s.calendar = text::parse_int<std::int64_t>(f[2], where);
    s.gap = text::parse_int<std::size_t>(f[3], where);
    for (std::size_t k = 0; k < F; ++k) s.features.push_back(text::parse_double(f[4 + k], where));
    for (std::size_t k = 0; k < K; ++k) s.targets.push_back(text::parse_double(f[4 + F + k], where));
    for (std::size_t k = 0; k < K; ++k) s.mask.push_back(text::parse_int<std::uint8_t>(f[4 + F + K + k], where));
    d.users[cursor].steps.push_back(std::move(s));
  }
  for (const auto& u : d.users) {
    if (u.steps.empty()) throw DataError("user " + std::to_string(u.user_id) + " has no steps");
  }
  return d;
}

}  // namespace ltv::pipeline

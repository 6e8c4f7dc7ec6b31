#include "seqmon/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace seqmon {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key, "cannot parse '" + std::string(value) + "' as a number");
  return out;
}

ModelMode parse_mode(const std::string& key, std::string_view v) {
  if (v == "known_model") return ModelMode::known_model;
  if (v == "bounded_model") return ModelMode::bounded_model;
  throw ConfigError(key, "expected known_model or bounded_model, got '" + std::string(v) + "'");
}

StudyKind parse_study(const std::string& key, std::string_view v) {
  if (v == "gaussian_streams") return StudyKind::gaussian_streams;
  if (v == "irt_responses") return StudyKind::irt_responses;
  throw ConfigError(key, "expected gaussian_streams or irt_responses, got '" + std::string(v) + "'");
}

SelectionPolicy::Kind parse_selection(const std::string& key, std::string_view v) {
  if (v == "fixed_size_uniform") return SelectionPolicy::Kind::fixed_size_uniform;
  if (v == "bernoulli") return SelectionPolicy::Kind::bernoulli;
  throw ConfigError(key, "expected fixed_size_uniform or bernoulli, got '" + std::string(v) + "'");
}

using Setter = std::function<void(StudyConfig&, const std::string&, std::string_view)>;

template <typename T>
Setter number(T StudyConfig::*field) {
  return [field](StudyConfig& c, const std::string& k, std::string_view v) { c.*field = parse_number<T>(k, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"pool_size", number(&StudyConfig::pool_size)},
      {"horizon", number(&StudyConfig::horizon)},
      {"alpha", number(&StudyConfig::alpha)},
      {"selection", [](StudyConfig& c, const std::string& k, std::string_view v) {
         c.selection.kind = parse_selection(k, v);
       }},
      {"select_size", [](StudyConfig& c, const std::string& k, std::string_view v) {
         c.selection.size = parse_number<std::size_t>(k, v);
       }},
      {"select_lambda", [](StudyConfig& c, const std::string& k, std::string_view v) {
         c.selection.lambda = parse_number<double>(k, v);
       }},
      {"rho_lo", number(&StudyConfig::rho_lo)},
      {"rho_hi", number(&StudyConfig::rho_hi)},
      {"mu_lo", number(&StudyConfig::mu_lo)},
      {"mu_hi", number(&StudyConfig::mu_hi)},
      {"misspec_covariance", number(&StudyConfig::misspec_covariance)},
      {"beta0_lo", number(&StudyConfig::beta0_lo)},
      {"beta0_hi", number(&StudyConfig::beta0_hi)},
      {"beta1_lo", number(&StudyConfig::beta1_lo)},
      {"beta1_hi", number(&StudyConfig::beta1_hi)},
      {"pi_lo", number(&StudyConfig::pi_lo)},
      {"pi_hi", number(&StudyConfig::pi_hi)},
      {"examinees_lo", number(&StudyConfig::examinees_lo)},
      {"examinees_hi", number(&StudyConfig::examinees_hi)},
      {"m_lo", number(&StudyConfig::m_lo)},
      {"m_hi", number(&StudyConfig::m_hi)},
      {"rho_bar", number(&StudyConfig::rho_bar)},
      {"theta_lo", number(&StudyConfig::theta_lo)},
      {"theta_hi", number(&StudyConfig::theta_hi)},
      {"theta_grid_size", number(&StudyConfig::theta_grid_size)},
      {"min_new_items", number(&StudyConfig::min_new_items)},
      {"replications", number(&StudyConfig::replications)},
      {"seed", number(&StudyConfig::seed)},
      {"threads", number(&StudyConfig::threads)},
  };
  return table;
}

}  // namespace

StudyConfig parse_study_config(std::string_view text) {
  std::map<std::string, std::string, std::less<>> pairs;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    if (value.empty()) throw ConfigError(key, "empty value");
    if (key != "study" && key != "mode" && !setters().contains(key)) throw ConfigError(key, "unknown key");
    if (!pairs.emplace(key, value).second) throw ConfigError(key, "given more than once");
  }

  const StudyKind study = pairs.contains("study") ? parse_study("study", pairs.at("study")) : StudyKind::gaussian_streams;
  const ModelMode mode = pairs.contains("mode") ? parse_mode("mode", pairs.at("mode")) : ModelMode::known_model;
  StudyConfig config = study == StudyKind::gaussian_streams ? StudyConfig::study1(mode) : StudyConfig::study2(mode);
  for (const auto& [key, value] : pairs) {
    if (key == "study" || key == "mode") continue;
    setters().at(key)(config, key, value);
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    throw ConfigError(what.substr(0, what.find(':')), what.substr(what.find(':') + 2));
  }
  return config;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_study_config(buffer.str());
}

std::string format_study_config(const StudyConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "study = " << (c.study == StudyKind::gaussian_streams ? "gaussian_streams" : "irt_responses") << '\n'
      << "mode = " << (c.mode == ModelMode::known_model ? "known_model" : "bounded_model") << '\n'
      << "pool_size = " << c.pool_size << '\n'
      << "horizon = " << c.horizon << '\n'
      << "alpha = " << c.alpha << '\n'
      << "selection = "
      << (c.selection.kind == SelectionPolicy::Kind::fixed_size_uniform ? "fixed_size_uniform" : "bernoulli") << '\n'
      << "select_size = " << c.selection.size << '\n'
      << "select_lambda = " << c.selection.lambda << '\n'
      << "rho_lo = " << c.rho_lo << '\n'
      << "rho_hi = " << c.rho_hi << '\n'
      << "mu_lo = " << c.mu_lo << '\n'
      << "mu_hi = " << c.mu_hi << '\n'
      << "misspec_covariance = " << c.misspec_covariance << '\n'
      << "beta0_lo = " << c.beta0_lo << '\n'
      << "beta0_hi = " << c.beta0_hi << '\n'
      << "beta1_lo = " << c.beta1_lo << '\n'
      << "beta1_hi = " << c.beta1_hi << '\n'
      << "pi_lo = " << c.pi_lo << '\n'
      << "pi_hi = " << c.pi_hi << '\n'
      << "examinees_lo = " << c.examinees_lo << '\n'
      << "examinees_hi = " << c.examinees_hi << '\n'
      << "m_lo = " << c.m_lo << '\n'
      << "m_hi = " << c.m_hi << '\n'
      << "rho_bar = " << c.rho_bar << '\n'
      << "theta_lo = " << c.theta_lo << '\n'
      << "theta_hi = " << c.theta_hi << '\n'
      << "theta_grid_size = " << c.theta_grid_size << '\n'
      << "min_new_items = " << c.min_new_items << '\n'
      << "replications = " << c.replications << '\n'
      << "seed = " << c.seed << '\n'
      << "threads = " << c.threads << '\n';
  return out.str();
}

}  // namespace seqmon

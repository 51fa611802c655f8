#include "bistnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bistnet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Parser {
  std::string where;

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }

  double real(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    fail("expected a number, got '" + v + "'");
  }

  std::uint64_t integer(const std::string& v) const {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail("expected a non-negative integer, got '" + v + "'");
    return out;
  }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true or false, got '" + v + "'");
  }
};

using Setter = std::function<void(RunConfig&, const Parser&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"temperature", [](RunConfig& c, const Parser& p, const std::string& v) { c.correspondence.temperature = p.real(v); }},
      {"tile_rows", [](RunConfig& c, const Parser& p, const std::string& v) { c.correspondence.tile_rows = p.integer(v); }},
      {"c_seg", [](RunConfig& c, const Parser& p, const std::string& v) { c.msrb.c_seg = p.integer(v); }},
      {"btfb.equation_literal", [](RunConfig& c, const Parser& p, const std::string& v) { c.btfb_equation_literal = p.boolean(v); }},
      {"msrb.base_channels", [](RunConfig& c, const Parser& p, const std::string& v) { c.msrb.base_channels = p.integer(v); }},
      {"msrb.unet_depth", [](RunConfig& c, const Parser& p, const std::string& v) { c.msrb.unet_depth = p.integer(v); }},
      {"msrb.share_level_weights", [](RunConfig& c, const Parser& p, const std::string& v) { c.msrb.share_level_weights = p.boolean(v); }},
      {"loss.lambda_edge", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.lambda_edge = p.real(v); }},
      {"loss.lambda_hem", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.lambda_hem = p.real(v); }},
      {"loss.lambda_c", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.lambda_c = p.real(v); }},
      {"loss.hem_fraction", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.hem_fraction = p.real(v); }},
      {"loss.lambda_percep", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.lambda_percep = p.real(v); }},
      {"loss.lambda_temporal", [](RunConfig& c, const Parser& p, const std::string& v) { c.loss.lambda_temporal = p.real(v); }},
      {"seed", [](RunConfig& c, const Parser& p, const std::string& v) { c.seed = p.integer(v); }},
      {"extractor_seed", [](RunConfig& c, const Parser& p, const std::string& v) { c.extractor_seed = p.integer(v); }},
      {"epochs", [](RunConfig& c, const Parser& p, const std::string& v) { c.epochs = p.integer(v); }},
      {"learning_rate", [](RunConfig& c, const Parser& p, const std::string& v) { c.adam.learning_rate = p.real(v); }},
      {"batch_size", [](RunConfig& c, const Parser& p, const std::string& v) { c.batch_size = p.integer(v); }},
      {"deterministic", [](RunConfig& c, const Parser& p, const std::string& v) { c.deterministic = p.boolean(v); }},
      {"resize_standard", [](RunConfig& c, const Parser& p, const std::string& v) { c.resize_standard = p.boolean(v); }},
      {"frame_begin", [](RunConfig& c, const Parser& p, const std::string& v) { c.frame_begin = p.integer(v); }},
      {"frame_end", [](RunConfig& c, const Parser& p, const std::string& v) { c.frame_end = p.integer(v); }},
      {"cdc.bins", [](RunConfig& c, const Parser& p, const std::string& v) { c.cdc.bins = p.integer(v); }},
      {"cdc.strides",
       [](RunConfig& c, const Parser& p, const std::string& v) {
         c.cdc.strides.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) c.cdc.strides.push_back(p.integer(trim(item)));
       }},
      {"cdc.log_base",
       [](RunConfig& c, const Parser& p, const std::string& v) {
         if (v == "e") c.cdc.log_base = metrics::LogBase::e;
         else if (v == "2") c.cdc.log_base = metrics::LogBase::two;
         else p.fail("cdc.log_base must be e or 2, got '" + v + "'");
       }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (!(correspondence.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (correspondence.tile_rows == 0) throw ConfigError("tile_rows must be > 0");
  msrb.validate();
  loss.validate();
  adam.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (cdc.bins == 0 || cdc.strides.empty()) throw ConfigError("cdc.bins and cdc.strides must be non-empty");
  if (frame_begin && frame_end && *frame_begin > *frame_end) throw ConfigError("frame_begin exceeds frame_end");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const Parser parser{source + ":" + std::to_string(number)};
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) parser.fail("expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) parser.fail("unknown key '" + key + "'");
    if (value.empty()) parser.fail("missing value for '" + key + "'");
    it->second(config, parser, value);
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "temperature = " << c.correspondence.temperature << "\n"
    << "tile_rows = " << c.correspondence.tile_rows << "\n"
    << "c_seg = " << c.msrb.c_seg << "\n"
    << "btfb.equation_literal = " << b(c.btfb_equation_literal) << "\n"
    << "msrb.base_channels = " << c.msrb.base_channels << "\n"
    << "msrb.unet_depth = " << c.msrb.unet_depth << "\n"
    << "msrb.share_level_weights = " << b(c.msrb.share_level_weights) << "\n"
    << "loss.lambda_edge = " << c.loss.lambda_edge << "\n"
    << "loss.lambda_hem = " << c.loss.lambda_hem << "\n"
    << "loss.lambda_c = " << c.loss.lambda_c << "\n"
    << "loss.hem_fraction = " << c.loss.hem_fraction << "\n"
    << "loss.lambda_percep = " << c.loss.lambda_percep << "\n"
    << "loss.lambda_temporal = " << c.loss.lambda_temporal << "\n"
    << "seed = " << c.seed << "\n"
    << "extractor_seed = " << c.extractor_seed << "\n"
    << "epochs = " << c.epochs << "\n"
    << "learning_rate = " << c.adam.learning_rate << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "deterministic = " << b(c.deterministic) << "\n"
    << "resize_standard = " << b(c.resize_standard) << "\n";
  if (c.frame_begin) o << "frame_begin = " << *c.frame_begin << "\n";
  if (c.frame_end) o << "frame_end = " << *c.frame_end << "\n";
  o << "cdc.bins = " << c.cdc.bins << "\n" << "cdc.strides = ";
  for (std::size_t i = 0; i < c.cdc.strides.size(); ++i) o << (i ? "," : "") << c.cdc.strides[i];
  o << "\ncdc.log_base = " << (c.cdc.log_base == metrics::LogBase::e ? "e" : "2") << "\n";
  return o.str();
}

}  // namespace bistnet

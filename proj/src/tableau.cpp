#include "rfrk/tableau.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "rfrk/builtin_tableaus_data.hpp"

namespace rfrk {
namespace {

std::vector<std::string> tokenize(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string word;
    while (words >> word) tokens.push_back(word);
  }
  return tokens;
}

double to_double(const std::string& token) {
  std::size_t used = 0;
  double value = 0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) throw std::runtime_error("bad number '" + token + "' in tableau data");
  return value;
}

int to_positive_int(const std::string& token) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || value < 1) {
    throw std::runtime_error("bad count '" + token + "' in tableau data");
  }
  return value;
}

const std::map<std::string, ButcherTableau<double>>& registry() {
  static const auto tableaus = [] {
    std::istringstream in(kBuiltinTableauData);
    std::map<std::string, ButcherTableau<double>> out;
    for (auto& t : parse_tableaus(in)) out.emplace(t.name(), std::move(t));
    return out;
  }();
  return tableaus;
}

}  // namespace

std::vector<ButcherTableau<double>> parse_tableaus(std::istream& in) {
  const auto tokens = tokenize(in);
  std::vector<ButcherTableau<double>> out;
  std::size_t pos = 0;
  auto next = [&]() -> const std::string& {
    if (pos >= tokens.size()) throw std::runtime_error("truncated tableau record");
    return tokens[pos++];
  };
  while (pos < tokens.size()) {
    const std::string name = next();
    const int s = to_positive_int(next());
    const int p = to_positive_int(next());
    Matrix<double> a(s, s);
    Vector<double> b(s), c(s);
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < s; ++j) a(i, j) = to_double(next());
    }
    for (int i = 0; i < s; ++i) b(i) = to_double(next());
    for (int i = 0; i < s; ++i) c(i) = to_double(next());
    out.emplace_back(name, p, std::move(a), std::move(b), std::move(c));
  }
  return out;
}

void write_tableau(std::ostream& out, const ButcherTableau<double>& t) {
  char buf[32];
  auto row = [&](const auto& values) {
    out << ' ';
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      std::snprintf(buf, sizeof buf, " %.16e", values(j));
      out << buf;
    }
    out << '\n';
  };
  out << t.name() << ' ' << t.stages() << ' ' << t.order() << '\n';
  for (int i = 0; i < t.stages(); ++i) row(t.a().row(i));
  row(t.b());
  row(t.c());
}

std::vector<std::string> builtin_scheme_names() {
  return {"SSPRK22", "SSPRK33", "RK44", "BSRK85"};
}

ButcherTableau<double> builtin_tableau(const std::string& name) {
  const auto& reg = registry();
  const auto it = reg.find(name);
  if (it == reg.end()) throw UnknownSchemeError(name);
  return it->second;
}

Vector<double> default_k(const std::string& name) {
  Vector<double> k;
  if (name == "SSPRK22") {
    k.resize(2);
    k << 1, -1;
  } else if (name == "SSPRK33") {
    k.resize(3);
    k << 2, -1, -1;
  } else if (name == "RK44") {
    k.resize(4);
    k << 1, 2, -2, -1;
  } else if (name == "BSRK85") {
    k = Vector<double>::Zero(8);
    k.head(3) << 2, -1, -1;
  } else {
    throw UnknownSchemeError(name);
  }
  return k;
}

}  // namespace rfrk

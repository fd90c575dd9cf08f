#include "draws_io.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace stagesens::cli {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("draws line " + std::to_string(line) + ": cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"") == std::string_view::npos) {
    return std::string(s);
  }
  std::string out = "\"";
  for (const char c : s) {
    out += c;
    if (c == '"') {
      out += '"';
    }
  }
  return out + '"';
}

void write_draws(std::ostream& out, const mcmc::PosteriorDraws& draws, int burn_in, int thin) {
  out << "chain,iteration";
  for (const auto& n : draws.names) {
    out << ',' << csv_field(n);
  }
  out << '\n';
  char buf[64];
  for (int c = 0; c < draws.chains; ++c) {
    for (int d = 0; d < draws.draws_per_chain; ++d) {
      out << c << ',' << burn_in + (d + 1) * thin;
      const Eigen::Index row = static_cast<Eigen::Index>(c) * draws.draws_per_chain + d;
      for (Eigen::Index p = 0; p < draws.values.cols(); ++p) {
        const auto res = std::to_chars(buf, buf + sizeof buf, draws.values(row, p));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      out << '\n';
    }
  }
}

mcmc::PosteriorDraws read_draws(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("draws file is empty");
  }
  auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration") {
    throw std::runtime_error("draws header must start with chain,iteration");
  }
  mcmc::PosteriorDraws draws;
  draws.names.assign(header.begin() + 2, header.end());
  std::map<int, std::vector<std::vector<double>>> by_chain;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("draws line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields");
    }
    const int chain = static_cast<int>(parse_double(fields[0], lineno));
    std::vector<double> row;
    row.reserve(fields.size() - 2);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      row.push_back(parse_double(fields[i], lineno));
    }
    by_chain[chain].push_back(std::move(row));
  }
  if (by_chain.empty()) {
    throw std::runtime_error("draws file holds no draws");
  }
  draws.chains = static_cast<int>(by_chain.size());
  draws.draws_per_chain = static_cast<int>(by_chain.begin()->second.size());
  draws.values.resize(static_cast<Eigen::Index>(draws.chains) * draws.draws_per_chain,
                      static_cast<Eigen::Index>(draws.names.size()));
  Eigen::Index r = 0;
  for (const auto& [chain, rows] : by_chain) {
    if (static_cast<int>(rows.size()) != draws.draws_per_chain) {
      throw std::runtime_error("draws: chains hold different numbers of draws");
    }
    for (const auto& row : rows) {
      for (std::size_t p = 0; p < row.size(); ++p) {
        draws.values(r, static_cast<Eigen::Index>(p)) = row[p];
      }
      ++r;
    }
  }
  draws.acceptance.resize(static_cast<std::size_t>(draws.chains));
  return draws;
}

}  // namespace stagesens::cli

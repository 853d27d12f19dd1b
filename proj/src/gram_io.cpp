#include <sstream>

#include "text_util.hpp"
#include "twk/engine.hpp"
#include "twk/error.hpp"

namespace twk {

std::string format_gram(const GramMatrix& gram) {
  const std::size_t n = gram.size();
  if (!gram.labels.empty() && gram.labels.size() != n)
    throw InputError("gram matrix has " + std::to_string(gram.labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  std::string out = "gram 1 " + std::to_string(n) + "\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j) out += ' ';
      out += detail::fmt17(gram.values(i, j));
    }
    out += '\n';
  }
  out += "labels";
  for (std::size_t i = 0; i < n; ++i) out += " " + std::to_string(gram.labels.empty() ? -1 : gram.labels[i]);
  out += '\n';
  return out;
}

GramMatrix parse_gram(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&]() {
    while (std::getline(in, line))
      if (!detail::split_ws(line).empty()) return true;
    return false;
  };
  if (!next()) throw InputError("gram file is empty");
  auto head = detail::split_ws(line);
  if (head.size() != 3 || head[0] != "gram" || head[1] != "1")
    throw InputError("expected header 'gram 1 <n>'");
  const long long n = detail::parse_int(head[2], "gram size");
  if (n < 0) throw InputError("negative gram size");
  GramMatrix g;
  g.values = Matrix(n, n);
  for (long long i = 0; i < n; ++i) {
    if (!next()) throw InputError("gram file ends after " + std::to_string(i) + " rows");
    auto tok = detail::split_ws(line);
    if (static_cast<long long>(tok.size()) != n)
      throw InputError("gram row " + std::to_string(i) + " has " + std::to_string(tok.size()) +
                       " values, expected " + std::to_string(n));
    for (long long j = 0; j < n; ++j) g.values(i, j) = detail::parse_double(tok[j], "gram entry");
  }
  if (!next()) throw InputError("gram file lacks a labels line");
  auto tok = detail::split_ws(line);
  if (tok.empty() || tok[0] != "labels" || static_cast<long long>(tok.size()) != n + 1)
    throw InputError("expected 'labels' followed by " + std::to_string(n) + " values");
  for (long long i = 0; i < n; ++i)
    g.labels.push_back(static_cast<int>(detail::parse_int(tok[i + 1], "label")));
  if (next()) throw InputError("trailing content after labels");
  return g;
}

void save_gram(const GramMatrix& gram, const std::filesystem::path& path) {
  detail::write_file(path.string(), format_gram(gram));
}

GramMatrix load_gram(const std::filesystem::path& path) {
  try {
    return parse_gram(detail::read_file(path.string()));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace twk

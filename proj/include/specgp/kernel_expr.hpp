#pragma once

// Text form of kernels used by experiment configs:
//
//   kernel := term ("+" term)*
//   term   := factor ("*" factor)*
//   factor := "(" kernel ")" | name "(" [key "=" value ("," key "=" value)*] ")"
//   value  := number | "[" number ("," number)* "]"
//
// e.g. "matern52(var=1,len=1)*cos(var=1,len=11)". Omitted parameters are
// filled from KernelDefaults.

#include <cctype>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "specgp/error.hpp"
#include "specgp/kernels.hpp"

namespace specgp {

struct KernelDefaults {
  std::optional<double> variance;
  std::vector<double> lengthscales;  // one per input dimension
  std::optional<double> period;
};

namespace detail {

class KernelParser {
 public:
  KernelParser(std::string_view text, const KernelDefaults& defaults)
      : s_(text), defaults_(defaults) {}

  Kernel parse() {
    Kernel k = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return k;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("kernel expression: " + msg, pos_);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Kernel expr() {
    std::vector<Kernel> terms{term()};
    while (accept('+')) terms.push_back(term());
    return terms.size() == 1 ? terms.front() : Kernel::sum(flatten(std::move(terms), KernelFamily::Sum));
  }

  Kernel term() {
    std::vector<Kernel> factors{factor()};
    while (accept('*')) factors.push_back(factor());
    return factors.size() == 1 ? factors.front()
                               : Kernel::product(flatten(std::move(factors), KernelFamily::Product));
  }

  static std::vector<Kernel> flatten(std::vector<Kernel> parts, KernelFamily f) {
    std::vector<Kernel> out;
    for (auto& p : parts) {
      if (p.family() == f)
        out.insert(out.end(), p.children().begin(), p.children().end());
      else
        out.push_back(std::move(p));
    }
    return out;
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected a name");
    std::string id(s_.substr(start, pos_ - start));
    for (auto& ch : id) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return id;
  }

  double number() {
    skip_ws();
    double v = 0.0;
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  std::vector<double> value() {
    if (!accept('[')) return {number()};
    std::vector<double> out{number()};
    while (accept(',')) out.push_back(number());
    expect(']');
    return out;
  }

  Kernel factor() {
    if (accept('(')) {
      Kernel k = expr();
      expect(')');
      return k;
    }
    const std::size_t name_pos = pos_;
    const std::string name = identifier();
    KernelFamily fam;
    if (name == "se" || name == "rbf")
      fam = KernelFamily::SE;
    else if (name == "se_ard" || name == "seard" || name == "ard")
      fam = KernelFamily::SEArd;
    else if (name == "cos" || name == "cosine")
      fam = KernelFamily::Cosine;
    else if (name == "matern52" || name == "matern")
      fam = KernelFamily::Matern52;
    else {
      pos_ = name_pos;
      fail("unknown kernel '" + name + "'");
    }

    std::optional<double> var;
    std::vector<double> len;
    // The argument list is optional: "se" means "se()".
    if (accept('(') && !accept(')')) {
      do {
        const std::string key = identifier();
        expect('=');
        std::vector<double> v = value();
        if (key == "var" || key == "variance") {
          if (v.size() != 1) fail("variance takes a single value");
          var = v[0];
        } else if (key == "len" || key == "lengthscale" || key == "period") {
          len = std::move(v);
        } else {
          fail("unknown parameter '" + key + "'");
        }
      } while (accept(','));
      expect(')');
    }

    if (!var) var = defaults_.variance;
    if (!var) fail(name + ": missing var");
    if (len.empty()) len = default_lengths(fam);
    if (len.empty()) fail(name + ": missing len");
    if (fam != KernelFamily::SEArd && len.size() != 1) fail(name + ": len takes a single value");

    try {
      switch (fam) {
        case KernelFamily::SE: return Kernel::se(*var, len[0]);
        case KernelFamily::SEArd: return Kernel::se_ard(*var, len);
        case KernelFamily::Cosine: return Kernel::cosine(*var, len[0]);
        default: return Kernel::matern52(*var, len[0]);
      }
    } catch (const InputError& e) {
      fail(e.what());
    }
  }

  std::vector<double> default_lengths(KernelFamily fam) const {
    if (fam == KernelFamily::Cosine && defaults_.period) return {*defaults_.period};
    if (defaults_.lengthscales.empty()) return {};
    if (fam == KernelFamily::SEArd) return defaults_.lengthscales;
    double mean = 0.0;
    for (double l : defaults_.lengthscales) mean += l;
    return {mean / static_cast<double>(defaults_.lengthscales.size())};
  }

  std::string_view s_;
  const KernelDefaults& defaults_;
  std::size_t pos_ = 0;
};

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Kernel parse_kernel(std::string_view text, const KernelDefaults& defaults = {}) {
  return detail::KernelParser(text, defaults).parse();
}

/// Canonical expression; parse_kernel(to_string(k)) reproduces k exactly.
inline std::string to_string(const Kernel& k) {
  using detail::format_number;
  if (k.is_composite()) {
    const bool is_sum = k.family() == KernelFamily::Sum;
    std::string out;
    for (std::size_t i = 0; i < k.children().size(); ++i) {
      if (i) out += is_sum ? "+" : "*";
      const Kernel& c = k.children()[i];
      const bool paren = !is_sum && c.family() == KernelFamily::Sum;
      out += paren ? "(" + to_string(c) + ")" : to_string(c);
    }
    return out;
  }
  std::string out = std::string(family_name(k.family())) + "(var=" + format_number(k.variance()) + ",len=";
  if (k.family() == KernelFamily::SEArd) {
    out += "[";
    for (std::size_t d = 0; d < k.lengthscales().size(); ++d) {
      if (d) out += ",";
      out += format_number(k.lengthscales()[d]);
    }
    out += "]";
  } else {
    out += format_number(k.lengthscales()[0]);
  }
  return out + ")";
}

}  // namespace specgp

#include "gpcert/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gpcert {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset::Dataset(int state_dim, int control_dim) : n_(state_dim), m_(control_dim) {
  if (state_dim < 1 || control_dim < 1) {
    throw UsageError("Dataset: dimensions must be positive");
  }
  states_.resize(n_, 0);
  controls_.resize(m_, 0);
}

void Dataset::reserve(int capacity) {
  if (capacity <= states_.cols()) {
    return;
  }
  states_.conservativeResize(n_, capacity);
  controls_.conservativeResize(m_, capacity);
}

void Dataset::append(const Eigen::Ref<const VectorXd>& x,
                     const Eigen::Ref<const VectorXd>& u, double z,
                     const std::string& tag) {
  if (x.size() != n_ || u.size() != m_) {
    throw UsageError("Dataset::append: dimension mismatch");
  }
  if (tag.find_first_of(" \t\n") != std::string::npos) {
    throw UsageError("Dataset::append: tags must not contain whitespace");
  }
  const int j = size();
  if (j >= states_.cols()) {
    reserve(std::max(8, 2 * j));
  }
  states_.col(j) = x;
  controls_.col(j) = u;
  outputs_.push_back(z);
  tags_.push_back(tag);
}

void Dataset::append(const Dataset& other) {
  if (other.n_ != n_ || other.m_ != m_) {
    throw UsageError("Dataset::append: dimension mismatch");
  }
  for (int j = 0; j < other.size(); ++j) {
    append(other.state(j), other.control(j), other.output(j), other.tag(j));
  }
}

VectorXd Dataset::outputs() const {
  return Eigen::Map<const VectorXd>(outputs_.data(), size());
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out(n_, m_);
  out.reserve(static_cast<int>(indices.size()));
  for (int idx : indices) {
    if (idx < 0 || idx >= size()) {
      throw UsageError("Dataset::subset: index out of range");
    }
    out.append(state(idx), control(idx), output(idx), tag(idx));
  }
  return out;
}

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = kFnvOffset;
  const int count = size();
  hash_bytes(h, &n_, sizeof(n_));
  hash_bytes(h, &m_, sizeof(m_));
  hash_bytes(h, &count, sizeof(count));
  for (int j = 0; j < count; ++j) {
    hash_bytes(h, states_.col(j).data(), sizeof(double) * n_);
    hash_bytes(h, controls_.col(j).data(), sizeof(double) * m_);
    hash_bytes(h, &outputs_[j], sizeof(double));
    hash_bytes(h, tags_[j].data(), tags_[j].size());
  }
  return h;
}

void Dataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw UsageError("Dataset::save: cannot open " + path);
  }
  out << n_ << " " << m_ << "\n";
  for (int j = 0; j < size(); ++j) {
    for (int i = 0; i < n_; ++i) {
      out << format_value(states_(i, j)) << " ";
    }
    for (int i = 0; i < m_; ++i) {
      out << format_value(controls_(i, j)) << " ";
    }
    out << format_value(outputs_[j]);
    if (!tags_[j].empty()) {
      out << " " << tags_[j];
    }
    out << "\n";
  }
  if (!out) {
    throw UsageError("Dataset::save: write failed for " + path);
  }
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("Dataset::load: cannot open " + path);
  }
  std::string line;
  int n = 0;
  int m = 0;
  bool have_header = false;
  Dataset out(1, 1);
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream row(line);
    if (!have_header) {
      if (!(row >> n >> m) || n < 1 || m < 1) {
        throw UsageError("Dataset::load: bad header in " + path);
      }
      out = Dataset(n, m);
      have_header = true;
      continue;
    }
    VectorXd x(n);
    VectorXd u(m);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!(row >> x[i])) {
        throw UsageError("Dataset::load: truncated row in " + path);
      }
    }
    for (int i = 0; i < m; ++i) {
      if (!(row >> u[i])) {
        throw UsageError("Dataset::load: truncated row in " + path);
      }
    }
    if (!(row >> z)) {
      throw UsageError("Dataset::load: truncated row in " + path);
    }
    std::string tag;
    row >> tag;
    out.append(x, u, z, tag);
  }
  if (!have_header) {
    throw UsageError("Dataset::load: empty file " + path);
  }
  return out;
}

}  // namespace gpcert

#pragma once

namespace supcr {

// Incremental mean; a run of equal values yields that value bit-exactly.
class RunningMean {
 public:
  void add(double x) {
    ++count_;
    mean_ += (x - mean_) / count_;
  }
  double value() const { return mean_; }

 private:
  double mean_ = 0.0;
  long count_ = 0;
};

}  // namespace supcr

#pragma once

#include <cmath>
#include <vector>

#include "loadlens/nn/autograd.hpp"

namespace loadlens::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Slot order follows the parameter list handed
/// to the constructor, so stepping is deterministic.
class Adam {
public:
    using Options = AdamOptions;

    Adam(std::vector<NamedParam> params, Options opts = Options())
        : params_(std::move(params)), opts_(opts) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
            v_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.var.grad() = Mat::Zero(p.var.rows(), p.var.cols());
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const Mat& g = params_[i].var.grad();
            m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
            v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseProduct(g);
            const Mat m_hat = m_[i] / bc1;
            const Mat v_hat = v_[i] / bc2;
            params_[i].var.value() -=
                opts_.learning_rate *
                m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + opts_.epsilon).matrix());
        }
    }

    const std::vector<NamedParam>& params() const { return params_; }

private:
    std::vector<NamedParam> params_;
    Options opts_;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
    long t_ = 0;
};

} // namespace loadlens::nn

#ifndef DOCTRIAGE_TESTS_HELPERS_HPP
#define DOCTRIAGE_TESTS_HELPERS_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctriage/image.hpp"
#include "doctriage/model.hpp"
#include "doctriage/rng.hpp"

namespace testutil {

namespace fs = std::filesystem;
using doctriage::Mat;
using doctriage::Vec;

// Temporary directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "doctriage-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rest) const { return path_ / rest; }

 private:
  fs::path path_;
};

inline void write_png(const fs::path& path, int height, int width,
                      const std::function<cv::Vec3b(int, int)>& pixel) {
  cv::Mat img(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) img.at<cv::Vec3b>(y, x) = pixel(y, x);  // BGR
  }
  fs::create_directories(path.parent_path());
  cv::imwrite(path.string(), img);
}

inline void write_solid_png(const fs::path& path, int height, int width,
                            unsigned char value) {
  write_png(path, height, width,
            [value](int, int) { return cv::Vec3b(value, value, value); });
}

// Executable stub standing in for the OCR engine.
inline fs::path write_engine_script(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  out << "#!/bin/sh\n" << body << "\n";
  out.close();
  fs::permissions(path, fs::perms::owner_all | fs::perms::group_read |
                            fs::perms::others_read);
  return path;
}

inline doctriage::ImageTensor random_tensor(doctriage::Rng& rng) {
  doctriage::ImageTensor t;
  t.data.resize(static_cast<std::size_t>(t.height) * t.width * 3);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, doctriage::Rng& rng,
                         double scale = 0.5) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

inline Vec random_vector(Eigen::Index n, doctriage::Rng& rng, double scale = 0.5) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

inline void randomize_params(doctriage::ModelParams& params, doctriage::Rng& rng,
                             double scale = 0.4) {
  doctriage::visit_tensors(params, [&](const char*, Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  });
}

// Central finite differences over arbitrary tensor lists. Returns the max
// guarded relative error against the analytic gradients.
inline double max_gradient_error_list(const std::vector<Mat*>& params,
                                      const std::vector<const Mat*>& grads,
                                      const std::function<double()>& loss_fn,
                                      double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& tensor = *params[k];
    const Mat& grad = *grads[k];
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double saved = tensor.data()[i];
      tensor.data()[i] = saved + eps;
      const double up = loss_fn();
      tensor.data()[i] = saved - eps;
      const double down = loss_fn();
      tensor.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad.data()[i];
      const double diff = std::abs(a - numeric);
      if (diff <= 1e-8) continue;  // both effectively zero
      worst = std::max(worst, diff / std::max({std::abs(a), std::abs(numeric), 1e-4}));
    }
  }
  return worst;
}

// Same check over every trainable tensor of a model.
inline double max_gradient_error(doctriage::ModelParams& params,
                                 const doctriage::ModelParams& analytic,
                                 const std::function<double()>& loss_fn,
                                 double eps = 1e-5) {
  std::vector<Mat*> param_list;
  std::vector<const Mat*> grad_list;
  doctriage::visit_tensors(params, [&](const char*, Mat& t) { param_list.push_back(&t); });
  doctriage::visit_tensors(const_cast<doctriage::ModelParams&>(analytic),
                           [&](const char*, Mat& t) { grad_list.push_back(&t); });
  return max_gradient_error_list(param_list, grad_list, loss_fn, eps);
}

inline std::vector<Mat*> encoder_tensor_list(doctriage::EncoderParams& p) {
  return {&p.fwd.w_in, &p.fwd.w_rec, &p.fwd.bias,    &p.bwd.w_in,
          &p.bwd.w_rec, &p.bwd.bias, &p.attn.proj,   &p.attn.score};
}

inline std::vector<const Mat*> encoder_grad_list(const doctriage::EncoderGrads& g) {
  return {&g.fwd.w_in, &g.fwd.w_rec, &g.fwd.bias,  &g.bwd.w_in,
          &g.bwd.w_rec, &g.bwd.bias, &g.attn.proj, &g.attn.score};
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out += "'";
  return out;
}

struct CommandResult {
  int exit_code;
  std::string out;
  std::string err;
};

// Runs the CLI binary through the shell, capturing stdout/stderr.
inline CommandResult run_cli(const std::vector<std::string>& args, const fs::path& cwd) {
  const fs::path out_file = cwd / "_stdout.txt";
  const fs::path err_file = cwd / "_stderr.txt";
  std::string cmd = "cd " + shell_quote(cwd.string()) + " && " +
                    shell_quote(DOC_TRIAGE_BIN_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(out_file.string()) + " 2> " + shell_quote(err_file.string());
  const int status = std::system(cmd.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = doctriage::read_file_bytes(out_file);
  result.err = doctriage::read_file_bytes(err_file);
  return result;
}

}  // namespace testutil

#endif  // DOCTRIAGE_TESTS_HELPERS_HPP

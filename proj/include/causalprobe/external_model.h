// Adapter for pretrained models served by a worker process.
//
// The worker is started with /bin/sh -c <command> and speaks one JSON object
// per line over stdin/stdout (see docs/formats.md). Requests are serialized
// behind a mutex, so a single adapter may be shared between threads.

#ifndef CAUSALPROBE_EXTERNAL_MODEL_H_
#define CAUSALPROBE_EXTERNAL_MODEL_H_

#include <cstdio>
#include <mutex>
#include <string>

#include <sys/types.h>

#include "causalprobe/model.h"

namespace causalprobe {

class ExternalProcessModel : public LayeredModel {
 public:
  // Starts the worker and performs the "info" handshake. Throws ModelError if
  // the worker cannot be started or answers malformed records.
  explicit ExternalProcessModel(const std::string &command);
  ~ExternalProcessModel() override;

  ExternalProcessModel(const ExternalProcessModel &) = delete;
  ExternalProcessModel &operator=(const ExternalProcessModel &) = delete;

  std::string model_id() const override { return model_id_; }
  int n_layers() const override { return n_layers_; }
  int embedding_width() const override { return width_; }
  Task task() const override { return task_; }
  std::size_t max_positions() const override { return max_positions_; }

  EncodedInput encode(const ModelInput &input, int layer) const override;
  TaskOutput resume(const ModelInput &input, const Eigen::MatrixXd &embeddings,
                    int layer) const override;
  TaskOutput forward(const ModelInput &input) const override;
  std::optional<Eigen::MatrixXd> outcome_gradient(const ModelInput &input,
                                                  const Eigen::MatrixXd &embeddings,
                                                  int layer) const override;

  // Sends one request and returns the reply; throws ModelError when the
  // reply has "ok": false.
  nlohmann::json call(const nlohmann::json &request) const;

 private:
  void shutdown();

  pid_t pid_ = -1;
  std::FILE *to_worker_ = nullptr;
  std::FILE *from_worker_ = nullptr;
  mutable std::mutex mutex_;

  std::string model_id_;
  int n_layers_ = 0;
  int width_ = 0;
  Task task_ = Task::kMaskedFill;
  std::size_t max_positions_ = 0;
  bool has_gradient_ = false;
};

}  // namespace causalprobe

#endif  // CAUSALPROBE_EXTERNAL_MODEL_H_

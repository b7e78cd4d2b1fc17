#include "causalprobe/external_model.h"

#include <csignal>
#include <cstring>

#include <sys/wait.h>
#include <unistd.h>

#include "causalprobe/error.h"

namespace causalprobe {
namespace {

std::string read_line(std::FILE *f) {
  std::string line;
  int c;
  while ((c = std::fgetc(f)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
  if (c == EOF && line.empty()) throw ModelError("worker closed its output");
  return line;
}

}  // namespace

ExternalProcessModel::ExternalProcessModel(const std::string &command) {
  if (command.empty()) throw ConfigError("empty worker command");
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw ModelError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ModelError(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) throw ModelError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_worker_ = fdopen(in_pipe[1], "w");
  from_worker_ = fdopen(out_pipe[0], "r");
  if (!to_worker_ || !from_worker_) {
    shutdown();
    throw ModelError("fdopen failed");
  }
  try {
    const auto info = call({{"op", "info"}});
    model_id_ = info.at("model_id").get<std::string>();
    n_layers_ = info.at("n_layers").get<int>();
    width_ = info.at("embedding_width").get<int>();
    task_ = task_from_string(info.at("task").get<std::string>());
    max_positions_ = info.value("max_positions", std::size_t{512});
    has_gradient_ = info.value("gradient", false);
  } catch (const nlohmann::json::exception &e) {
    shutdown();
    throw ModelError(std::string("bad worker info record: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
}

ExternalProcessModel::~ExternalProcessModel() { shutdown(); }

void ExternalProcessModel::shutdown() {
  if (to_worker_) {
    std::fputs("{\"op\":\"shutdown\"}\n", to_worker_);
    std::fclose(to_worker_);
    to_worker_ = nullptr;
  }
  if (from_worker_) {
    std::fclose(from_worker_);
    from_worker_ = nullptr;
  }
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

nlohmann::json ExternalProcessModel::call(const nlohmann::json &request) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!to_worker_ || !from_worker_) throw ModelError("worker is not running");
  const std::string line = request.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), to_worker_) != line.size() ||
      std::fflush(to_worker_) != 0) {
    throw ModelError("failed to write to worker");
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(read_line(from_worker_));
  } catch (const nlohmann::json::parse_error &e) {
    throw ModelError(std::string("worker sent malformed JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.value("ok", false)) {
    throw ModelError("worker error: " +
                     (reply.is_object() ? reply.value("error", std::string("unspecified"))
                                        : std::string("non-object reply")));
  }
  return reply;
}

EncodedInput ExternalProcessModel::encode(const ModelInput &input, int layer) const {
  const auto reply = call({{"op", "encode"}, {"layer", layer}, {"input", to_json(input)}});
  try {
    EncodedInput out;
    out.embeddings = matrix_from_json(reply.at("embeddings"));
    for (const auto &s : reply.at("word_rows")) {
      out.word_rows.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    }
    return out;
  } catch (const nlohmann::json::exception &e) {
    throw ModelError(std::string("bad worker encode record: ") + e.what());
  }
}

TaskOutput ExternalProcessModel::resume(const ModelInput &input,
                                        const Eigen::MatrixXd &embeddings, int layer) const {
  const auto reply = call({{"op", "continue"},
                           {"layer", layer},
                           {"input", to_json(input)},
                           {"embeddings", matrix_to_json(embeddings)}});
  return task_output_from_json(reply.at("output"));
}

TaskOutput ExternalProcessModel::forward(const ModelInput &input) const {
  const auto reply = call({{"op", "forward"}, {"input", to_json(input)}});
  return task_output_from_json(reply.at("output"));
}

std::optional<Eigen::MatrixXd> ExternalProcessModel::outcome_gradient(
    const ModelInput &input, const Eigen::MatrixXd &embeddings, int layer) const {
  if (!has_gradient_) return std::nullopt;
  const auto reply = call({{"op", "gradient"},
                           {"layer", layer},
                           {"input", to_json(input)},
                           {"embeddings", matrix_to_json(embeddings)}});
  return matrix_from_json(reply.at("gradient"));
}

}  // namespace causalprobe

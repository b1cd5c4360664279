#ifndef DOCTRIAGE_SUBPROCESS_HPP
#define DOCTRIAGE_SUBPROCESS_HPP

#include <chrono>
#include <csignal>
#include <cstring>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "doctriage/error.hpp"

namespace doctriage {

struct RunResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
};

// fork/exec with stdout+stderr capture and a wall-clock timeout. On timeout
// the child is killed with SIGKILL and `timed_out` is set.
inline RunResult run_command(const std::vector<std::string>& argv, double timeout_s) {
  if (argv.empty()) throw ConfigError("empty command line");

  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
    throw EngineError("pipe() failed: " + std::string(std::strerror(errno)));
  }

  const pid_t pid = fork();
  if (pid < 0) throw EngineError("fork() failed: " + std::string(std::strerror(errno)));

  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    std::fprintf(stderr, "exec failed: %s: %s\n", args[0], std::strerror(errno));
    _exit(127);
  }

  close(out_pipe[1]);
  close(err_pipe[1]);
  fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

  RunResult result;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  bool out_open = true, err_open = true;
  char buf[4096];

  while (out_open || err_open) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      kill(pid, SIGKILL);
      break;
    }
    const int wait_ms = static_cast<int>(std::min<long long>(
        250, std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1));

    pollfd fds[2];
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_pipe[0], POLLIN, 0};
    if (err_open) fds[nfds++] = {err_pipe[0], POLLIN, 0};
    const int rc = poll(fds, nfds, wait_ms);
    if (rc < 0 && errno != EINTR) break;

    auto drain = [&](int fd, std::string& sink, bool& open_flag) {
      for (;;) {
        const ssize_t n = read(fd, buf, sizeof(buf));
        if (n > 0) {
          sink.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0) {
          open_flag = false;
          return;
        } else {
          return;  // EAGAIN or EINTR
        }
      }
    };
    if (out_open) drain(out_pipe[0], result.out, out_open);
    if (err_open) drain(err_pipe[0], result.err, err_open);
  }

  close(out_pipe[0]);
  close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace doctriage

#endif  // DOCTRIAGE_SUBPROCESS_HPP

#pragma once

// JSON-over-HTTP front end for the review UI, rooted at /api/v1/.
//
//   GET  /api/v1/health
//   GET  /api/v1/experiments
//   GET  /api/v1/experiments/{id}
//   GET  /api/v1/experiments/{id}/irr/disagreements
//   POST /api/v1/experiments/{id}/irr/consensus        {expected_head, consensus, drafts}
//   GET  /api/v1/experiments/{id}/al/status
//   GET  /api/v1/experiments/{id}/al/iterations
//   GET  /api/v1/experiments/{id}/al/iterations/{n}/misclassified
//   POST /api/v1/experiments/{id}/al/validate          {expected_head}
//   POST /api/v1/experiments/{id}/al/tags              {expected_head, tags}
//   POST /api/v1/experiments/{id}/al/candidates/select {expected_head}
//   POST /api/v1/experiments/{id}/al/accept            {expected_head, accepted}
//   POST /api/v1/experiments/{id}/al/revert            {expected_head, to}
//   GET  /api/v1/experiments/{id}/report?partition=test
//
// Errors come back as {"code", "exit_code", "message", "violations"} with
// 400 (validation), 404 (unknown), 409 (stale head, lock, gate), 502
// (gateway) or 500.

#include <filesystem>
#include <memory>
#include <string>

#include "rubric_loop/workbench.hpp"

namespace rubric_loop {

class Service {
 public:
  Service(std::filesystem::path home, BackendChoice backend = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to an ephemeral port when `port` is 0; returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  // Returns once run() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rubric_loop

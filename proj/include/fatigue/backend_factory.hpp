// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>

#include "fatigue/backend.hpp"
#include "fatigue/config.hpp"
#include "fatigue/remote_backend.hpp"
#include "fatigue/scripted_backend.hpp"
#include "fatigue/toy_transformer.hpp"

namespace fatigue {

/// Builds a fresh backend for one run.
inline std::unique_ptr<Backend> make_backend(const BackendSelector& sel) {
  switch (sel.kind) {
    case BackendKind::Toy:
      return std::make_unique<ToyTransformer>(sel.toy);
    case BackendKind::Scripted:
      return make_scripted_backend(load_script(sel.script_path), sel.script_max_context);
    case BackendKind::Remote: {
      RemoteConfig rc;
      rc.endpoint = sel.endpoint;
      rc.auth = sel.auth;
      rc.timeout = std::chrono::milliseconds(sel.timeout_ms);
      return std::make_unique<RemoteBackend>(std::move(rc));
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unknown backend kind");
}

}  // namespace fatigue

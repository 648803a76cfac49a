#pragma once

#include "autofocus/backend.hpp"
#include "autofocus/config.hpp"
#include "autofocus/coord_parser.hpp"
#include "autofocus/error.hpp"
#include "autofocus/field.hpp"
#include "autofocus/geometry.hpp"
#include "autofocus/harness.hpp"
#include "autofocus/http_client.hpp"
#include "autofocus/image.hpp"
#include "autofocus/marker.hpp"
#include "autofocus/mock_server.hpp"
#include "autofocus/mock_world.hpp"
#include "autofocus/pipeline.hpp"
#include "autofocus/proposals.hpp"
#include "autofocus/uncertainty.hpp"

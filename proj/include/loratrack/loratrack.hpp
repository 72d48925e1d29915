#pragma once

#include "loratrack/common.hpp"
#include "loratrack/geo.hpp"
#include "loratrack/synthgen.hpp"
#include "loratrack/stepcount.hpp"
#include "loratrack/lora_phy.hpp"
#include "loratrack/energy.hpp"
#include "loratrack/device_mac.hpp"
#include "loratrack/base64.hpp"
#include "loratrack/gateway.hpp"
#include "loratrack/store.hpp"
#include "loratrack/server.hpp"
#include "loratrack/http_api.hpp"
#include "loratrack/udp.hpp"
#include "loratrack/simctl.hpp"

// Entry point: mount the panel against the lab service named in ?api=...

import { LabClient } from "./client.js";
import { LabPanel } from "./panel.js";

const api =
  new URLSearchParams(window.location.search).get("api") ??
  "http://localhost:8000";

const panel = new LabPanel(document.body, new LabClient(api));
void panel.start();

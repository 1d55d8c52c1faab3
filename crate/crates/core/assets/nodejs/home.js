// Smart-home device API client available to every function as require('./home').
'use strict';
const http = require('http');

const BASE_URL = (process.env.HOME_API_URL || 'http://127.0.0.1:8700').replace(/\/+$/, '');

class HomeError extends Error {}

function request(method, path, body) {
  return new Promise((resolve, reject) => {
    const data = body === undefined ? undefined : Buffer.from(JSON.stringify(body), 'utf8');
    const req = http.request(BASE_URL + path, {
      method,
      headers: data ? { 'Content-Type': 'application/json', 'Content-Length': data.length } : {},
      timeout: 10000,
    }, (res) => {
      const chunks = [];
      res.on('data', (c) => chunks.push(c));
      res.on('end', () => {
        const raw = Buffer.concat(chunks).toString('utf8');
        if (res.statusCode >= 400) {
          let detail = raw;
          try { detail = JSON.parse(raw).detail || raw; } catch (e) { /* keep raw */ }
          reject(new HomeError(`${method} ${path} failed: ${detail}`));
          return;
        }
        try {
          resolve(raw ? JSON.parse(raw) : null);
        } catch (e) {
          reject(e);
        }
      });
    });
    req.on('error', reject);
    req.on('timeout', () => req.destroy(new HomeError(`${method} ${path} timed out`)));
    if (data) req.write(data);
    req.end();
  });
}

async function devices() {
  return request('GET', '/devices');
}

async function state(deviceId) {
  return (await request('GET', `/devices/${deviceId}`)).attributes;
}

async function get(deviceId, attribute) {
  return (await request('GET', `/devices/${deviceId}/${attribute}`)).value;
}

async function set(deviceId, attribute, value) {
  return (await request('PUT', `/devices/${deviceId}/${attribute}`, { value })).attributes;
}

async function now() {
  return (await request('GET', '/clock')).tick;
}

module.exports = { devices, state, get, set, now, HomeError };

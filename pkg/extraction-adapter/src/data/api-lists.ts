/**
 * Vendored API classification lists.
 *
 * Provenance: representative subset of the API lists published with
 * the Drebin study (Arp et al., "DREBIN: Effective and Explainable
 * Detection of Android Malware in Your Pocket", NDSS 2014) and the
 * PScout permission map it draws on.  The full lists are external
 * artifacts and are not redistributed here; entries below cover the
 * classes common in both lists and sufficient for fixture-scale
 * corpora.  Extend by appending entries, never by reordering.
 */

export interface RestrictedApi {
  readonly className: string;
  readonly methodName: string;
  /** manifest permission the call is gated behind */
  readonly permission: string;
}

export interface SuspiciousApi {
  readonly className: string;
  readonly methodName: string;
}

export const RESTRICTED_APIS: readonly RestrictedApi[] = [
  { className: "android.telephony.SmsManager", methodName: "sendTextMessage", permission: "android.permission.SEND_SMS" },
  { className: "android.telephony.SmsManager", methodName: "sendDataMessage", permission: "android.permission.SEND_SMS" },
  { className: "android.telephony.SmsManager", methodName: "sendMultipartTextMessage", permission: "android.permission.SEND_SMS" },
  { className: "android.telephony.TelephonyManager", methodName: "getDeviceId", permission: "android.permission.READ_PHONE_STATE" },
  { className: "android.telephony.TelephonyManager", methodName: "getSubscriberId", permission: "android.permission.READ_PHONE_STATE" },
  { className: "android.telephony.TelephonyManager", methodName: "getSimSerialNumber", permission: "android.permission.READ_PHONE_STATE" },
  { className: "android.telephony.TelephonyManager", methodName: "getLine1Number", permission: "android.permission.READ_PHONE_STATE" },
  { className: "android.location.LocationManager", methodName: "getLastKnownLocation", permission: "android.permission.ACCESS_FINE_LOCATION" },
  { className: "android.location.LocationManager", methodName: "requestLocationUpdates", permission: "android.permission.ACCESS_FINE_LOCATION" },
  { className: "android.net.ConnectivityManager", methodName: "getActiveNetworkInfo", permission: "android.permission.ACCESS_NETWORK_STATE" },
  { className: "android.net.wifi.WifiManager", methodName: "getConnectionInfo", permission: "android.permission.ACCESS_WIFI_STATE" },
  { className: "android.net.wifi.WifiManager", methodName: "setWifiEnabled", permission: "android.permission.CHANGE_WIFI_STATE" },
  { className: "android.media.AudioRecord", methodName: "startRecording", permission: "android.permission.RECORD_AUDIO" },
  { className: "android.hardware.Camera", methodName: "open", permission: "android.permission.CAMERA" },
  { className: "android.bluetooth.BluetoothAdapter", methodName: "enable", permission: "android.permission.BLUETOOTH_ADMIN" },
  { className: "android.accounts.AccountManager", methodName: "getAccounts", permission: "android.permission.GET_ACCOUNTS" },
  { className: "android.app.NotificationManager", methodName: "notify", permission: "android.permission.POST_NOTIFICATIONS" },
];

export const SUSPICIOUS_APIS: readonly SuspiciousApi[] = [
  { className: "java.lang.Runtime", methodName: "exec" },
  { className: "java.lang.ProcessBuilder", methodName: "start" },
  { className: "dalvik.system.DexClassLoader", methodName: "loadClass" },
  { className: "java.lang.System", methodName: "loadLibrary" },
  { className: "javax.crypto.Cipher", methodName: "getInstance" },
  { className: "java.net.HttpURLConnection", methodName: "connect" },
  { className: "java.net.URL", methodName: "openConnection" },
  { className: "android.telephony.SmsManager", methodName: "sendTextMessage" },
  { className: "android.telephony.TelephonyManager", methodName: "getDeviceId" },
  { className: "android.telephony.TelephonyManager", methodName: "getSubscriberId" },
  { className: "android.content.Context", methodName: "startService" },
  { className: "android.content.Context", methodName: "registerReceiver" },
];

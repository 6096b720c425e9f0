import datetime
import pathlib
import tempfile
import unittest

import numpy as np

from eo_curator import catalog, errors, models
from tests import helpers

HEADER = 'scene_id,sensor,tile_id,date,path,bands,qa_path\n'


class CatalogTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tempdir.cleanup)
        self.root = pathlib.Path(self.tempdir.name)
        self.path = self.root / 'catalog.csv'

    def write(self, body: str, header: str = HEADER) -> None:
        self.path.write_text(header + body, encoding='utf-8')

    def test_records_are_sorted(self) -> None:
        self.write(
            'S2_2,EO,T002,2020-01-01,eo/S2_2.tif,B2;B3;B4;B8,qa/S2_2.tif\n'
            'S1_1,SAR,T001,2020-02-01,sar/S1_1.tif,VV;VH,\n'
            'S2_1,EO,T001,2020-01-15,eo/S2_1.tif,B2;B3;B4;B8,\n'
        )
        records = catalog.load_catalog(self.path)
        self.assertEqual(
            [r.scene_id for r in records], ['S2_1', 'S1_1', 'S2_2']
        )
        first = records[0]
        self.assertEqual(first.sensor, models.Sensor.EO)
        self.assertEqual(first.date, datetime.date(2020, 1, 15))
        self.assertEqual(first.bands, ('B2', 'B3', 'B4', 'B8'))
        self.assertEqual(first.path, self.root / 'eo/S2_1.tif')
        self.assertIsNone(first.qa_path)
        self.assertEqual(records[2].qa_path, self.root / 'qa/S2_2.tif')

    def test_qa_column_is_optional(self) -> None:
        self.write(
            'S1_1,SAR,T001,2020-02-01,sar/S1_1.tif,VV;VH\n',
            header='scene_id,sensor,tile_id,date,path,bands\n',
        )
        self.assertEqual(len(catalog.load_catalog(self.path)), 1)

    def test_duplicate_scene_id(self) -> None:
        self.write(
            'S2_1,EO,T001,2020-01-15,a.tif,B2;B3;B4;B8,\n'
            'S2_1,EO,T002,2020-01-16,b.tif,B2;B3;B4;B8,\n'
        )
        with self.assertRaises(errors.DuplicateSceneId):
            catalog.load_catalog(self.path)

    def test_missing_header_column(self) -> None:
        self.write(
            'S2_1,EO,T001,2020-01-15,a.tif\n',
            header='scene_id,sensor,tile_id,date,path\n',
        )
        with self.assertRaises(errors.MalformedCatalog):
            catalog.load_catalog(self.path)

    def test_malformed_rows(self) -> None:
        for row in (
            'S2_1,EO,T001,2020-13-45,a.tif,B2;B3;B4;B8,\n',
            'S2_1,RADAR,T001,2020-01-15,a.tif,B2;B3;B4;B8,\n',
            'S2_1,EO,T001,2020-01-15,,B2;B3;B4;B8,\n',
            'S1_1,SAR,T001,2020-01-15,a.tif,VV;VH,qa.tif\n',
        ):
            with self.subTest(row=row):
                self.write(row)
                with self.assertRaises(errors.MalformedCatalog):
                    catalog.load_catalog(self.path)

    def test_missing_file(self) -> None:
        with self.assertRaises(errors.MalformedCatalog):
            catalog.load_catalog(self.root / 'absent.csv')

    def test_write_then_load(self) -> None:
        records = [
            helpers.record(
                'S2_1',
                path=self.root / 'eo' / 'S2_1.tif',
                qa_path=self.root / 'qa' / 'S2_1.tif',
            ),
            helpers.record(
                'S1_1', sensor='SAR', path=self.root / 'sar' / 'S1_1.tif'
            ),
        ]
        catalog.write_catalog(self.path, records)
        text = self.path.read_text(encoding='utf-8')
        self.assertIn('S2_1,EO,T001,2020-01-15,eo/S2_1.tif', text)
        self.assertEqual(
            {r.scene_id: r for r in catalog.load_catalog(self.path)},
            {r.scene_id: r for r in records},
        )


class RasterTestCase(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tempdir.cleanup)
        self.root = pathlib.Path(self.tempdir.name)

    def test_16_bit_four_band_tile(self) -> None:
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 2**16, (4, 256, 256), dtype=np.uint16)
        record = helpers.write_eo_scene(self.root, 'S2_1', pixels)
        tile = catalog.load_tile(record)
        self.assertEqual(tile.bit_depth, 16)
        self.assertEqual(tile.pixels.shape, (4, 256, 256))
        self.assertEqual(tile.pixels.size, 256 * 256 * 4)
        self.assertEqual(tile.band_labels, ('B2', 'B3', 'B4', 'B8'))
        np.testing.assert_array_equal(tile.pixels, pixels)
        np.testing.assert_array_equal(tile.band('B4'), pixels[2])

    def test_8_bit_png(self) -> None:
        pixels = np.arange(48, dtype=np.uint8).reshape(3, 4, 4)
        path = self.root / 'rgb.png'
        catalog.write_tile(path, pixels)
        record = helpers.record('P', path=path, bands=('R', 'G', 'B'))
        tile = catalog.load_tile(record)
        self.assertEqual(tile.bit_depth, 8)
        np.testing.assert_array_equal(tile.pixels, pixels)

    def test_band_count_mismatch(self) -> None:
        path = self.root / 'three.tif'
        catalog.write_tile(path, np.zeros((3, 8, 8), dtype=np.uint16))
        with self.assertRaises(errors.BandCountMismatch):
            catalog.load_tile(helpers.record('S2_1', path=path))

    def test_undecodable_file(self) -> None:
        path = self.root / 'broken.tif'
        path.write_bytes(b'not a raster at all')
        with self.assertRaises(errors.DecodeError):
            catalog.load_tile(helpers.record('S2_1', path=path))
        with self.assertRaises(errors.DecodeError):
            catalog.load_tile(
                helpers.record('S2_2', path=self.root / 'absent.tif')
            )

    def test_float_samples_are_not_tiles(self) -> None:
        path = self.root / 'float.tif'
        catalog.write_tile(path, np.zeros((4, 8, 8), dtype=np.float32))
        with self.assertRaises(errors.DecodeError):
            catalog.load_tile(helpers.record('S2_1', path=path))
        self.assertEqual(catalog.read_raster(path).dtype, np.float32)

    def test_unknown_suffix(self) -> None:
        with self.assertRaises(errors.DecodeError):
            catalog.write_tile(
                self.root / 'x.jpg', np.zeros((1, 4, 4), np.uint8)
            )

    def test_missing_band(self) -> None:
        with self.assertRaises(errors.MissingBand):
            helpers.eo_tile(0).band('B11')

    def test_tile_leaves_source_array_writeable(self) -> None:
        pixels = np.zeros((3, 4, 4), dtype=np.uint8)
        tile = models.ImageTile(
            pixels=pixels, bit_depth=8, band_labels=('R', 'G', 'B')
        )
        self.assertTrue(pixels.flags.writeable)
        self.assertFalse(tile.pixels.flags.writeable)
        with self.assertRaises(ValueError):
            tile.pixels[0, 0, 0] = 1
        pixels[0, 0, 0] = 7
        self.assertEqual(pixels[0, 0, 0], 7)


class QATestCase(unittest.TestCase):
    def test_load_qa(self) -> None:
        with tempfile.TemporaryDirectory() as tempdir:
            root = pathlib.Path(tempdir)
            qa = np.zeros((1, 8, 8), dtype=np.uint16)
            qa[0, 0, :4] = 1024
            record = helpers.write_eo_scene(
                root, 'S2_1', np.zeros((4, 8, 8)), qa
            )
            tile = catalog.load_qa(record)
        self.assertIsNotNone(tile)
        mask = catalog.decode_qa_mask(tile, {10, 11})
        self.assertEqual(mask.flagged_count, 4)

    def test_no_qa_path(self) -> None:
        self.assertIsNone(catalog.load_qa(helpers.record('S2_1')))

    def test_cloud_bits(self) -> None:
        flags = np.array([[0, 1 << 10, 1 << 11, 1]], dtype=np.uint16)
        tile = models.ImageTile(
            pixels=flags[np.newaxis], bit_depth=16, band_labels=('QA60',)
        )
        mask = catalog.decode_qa_mask(tile, {10, 11})
        np.testing.assert_array_equal(
            mask.cloud_flagged, [[False, True, True, False]]
        )
        self.assertEqual(catalog.decode_qa_mask(tile, {0}).flagged_count, 1)

    def test_not_single_band(self) -> None:
        with self.assertRaises(errors.NotSingleBand):
            catalog.decode_qa_mask(helpers.eo_tile(0), {10})

    def test_flag_count_grows_with_cloud_bits(self) -> None:
        rng = np.random.default_rng(5)
        for _ in range(50):
            flags = rng.integers(0, 2**16, (1, 16, 16), dtype=np.uint16)
            tile = models.ImageTile(
                pixels=flags, bit_depth=16, band_labels=('QA60',)
            )
            smaller = {int(b) for b in rng.choice(16, 3, replace=False)}
            larger = smaller | {int(b) for b in rng.choice(16, 3)}
            self.assertLessEqual(
                catalog.decode_qa_mask(tile, smaller).flagged_count,
                catalog.decode_qa_mask(tile, larger).flagged_count,
            )
            self.assertEqual(
                catalog.decode_qa_mask(tile, set()).flagged_count, 0
            )

// Copyright 2026 The Skylite Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Standard texts of the three benchmark queries.

pub const Q1: &str = "\
select
    l_returnflag,
    l_linestatus,
    sum(l_quantity) as sum_qty,
    sum(l_extendedprice) as sum_base_price,
    sum(l_extendedprice * (1 - l_discount)) as sum_disc_price,
    sum(l_extendedprice * (1 - l_discount) * (1 + l_tax)) as sum_charge,
    avg(l_quantity) as avg_qty,
    avg(l_extendedprice) as avg_price,
    avg(l_discount) as avg_disc,
    count(*) as count_order
from
    lineitem
where
    l_shipdate <= date '1998-12-01' - interval '90' day (3)
group by
    l_returnflag,
    l_linestatus
order by
    l_returnflag,
    l_linestatus";

pub const Q6: &str = "\
select
    sum(l_extendedprice * l_discount) as revenue
from
    lineitem
where
    l_shipdate >= date '1994-01-01'
    and l_shipdate < date '1994-01-01' + interval '1' year
    and l_discount between .06 - 0.01 and .06 + 0.01
    and l_quantity < 24";

pub const Q12: &str = "\
select
    l_shipmode,
    sum(case
        when o_orderpriority = '1-URGENT'
            or o_orderpriority = '2-HIGH'
            then 1
        else 0
    end) as high_line_count,
    sum(case
        when o_orderpriority <> '1-URGENT'
            and o_orderpriority <> '2-HIGH'
            then 1
        else 0
    end) as low_line_count
from
    orders,
    lineitem
where
    o_orderkey = l_orderkey
    and l_shipmode in ('MAIL', 'SHIP')
    and l_commitdate < l_receiptdate
    and l_shipdate < l_commitdate
    and l_receiptdate >= date '1994-01-01'
    and l_receiptdate < date '1994-01-01' + interval '1' year
group by
    l_shipmode
order by
    l_shipmode";

pub fn by_number(n: u32) -> Option<&'static str> {
    match n {
        1 => Some(Q1),
        6 => Some(Q6),
        12 => Some(Q12),
        _ => None,
    }
}

use crate::storage::{DataType, Field, Schema, TableSchema};

fn money() -> DataType {
    DataType::decimal(15, 2)
}

/// The 16-column `lineitem` table.
pub fn lineitem_schema() -> TableSchema {
    let f = |n: &str, t: DataType| Field::new(n, t, false);
    TableSchema {
        name: "lineitem".into(),
        schema: Schema::new(vec![
            f("l_orderkey", DataType::Int64),
            f("l_partkey", DataType::Int64),
            f("l_suppkey", DataType::Int64),
            f("l_linenumber", DataType::Int64),
            f("l_quantity", money()),
            f("l_extendedprice", money()),
            f("l_discount", money()),
            f("l_tax", money()),
            f("l_returnflag", DataType::Utf8),
            f("l_linestatus", DataType::Utf8),
            f("l_shipdate", DataType::Date),
            f("l_commitdate", DataType::Date),
            f("l_receiptdate", DataType::Date),
            f("l_shipinstruct", DataType::Utf8),
            f("l_shipmode", DataType::Utf8),
            f("l_comment", DataType::Utf8),
        ]),
    }
}

/// The 9-column `orders` table.
pub fn orders_schema() -> TableSchema {
    let f = |n: &str, t: DataType| Field::new(n, t, false);
    TableSchema {
        name: "orders".into(),
        schema: Schema::new(vec![
            f("o_orderkey", DataType::Int64),
            f("o_custkey", DataType::Int64),
            f("o_orderstatus", DataType::Utf8),
            f("o_totalprice", money()),
            f("o_orderdate", DataType::Date),
            f("o_orderpriority", DataType::Utf8),
            f("o_clerk", DataType::Utf8),
            f("o_shippriority", DataType::Int64),
            f("o_comment", DataType::Utf8),
        ]),
    }
}
